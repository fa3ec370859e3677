use crate::Point;

/// A 2×3 affine map `p ↦ M·p + t`, stored row-major as
/// `[[a, b, tx], [c, d, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine(pub [[f64; 3]; 2]);

impl Default for Affine {
    fn default() -> Self {
        Self::identity()
    }
}

impl Affine {
    pub const fn identity() -> Self {
        Affine([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    }

    pub const fn translation(dx: f64, dy: f64) -> Self {
        Affine([[1.0, 0.0, dx], [0.0, 1.0, dy]])
    }

    /// Counter-clockwise rotation by `angle` radians about `center`
    /// (in a y-up frame; clockwise on screen).
    pub fn rotation_about(center: Point, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Affine([
            [c, -s, center.x - c * center.x + s * center.y],
            [s, c, center.y - s * center.x - c * center.y],
        ])
    }

    /// Scales both axes by `factor` about `center`.
    pub fn scale_about(center: Point, factor: f64) -> Self {
        Affine([
            [factor, 0.0, center.x * (1.0 - factor)],
            [0.0, factor, center.y * (1.0 - factor)],
        ])
    }

    pub const fn scale_xy(sx: f64, sy: f64) -> Self {
        Affine([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    }

    /// Mirror about the vertical line `x = axis_x`.
    pub const fn mirror_x(axis_x: f64) -> Self {
        Affine([[-1.0, 0.0, 2.0 * axis_x], [0.0, 1.0, 0.0]])
    }

    pub fn apply(&self, p: Point) -> Point {
        let [[a, b, tx], [c, d, ty]] = self.0;
        Point::new(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Affine) -> Affine {
        let [[a1, b1, x1], [c1, d1, y1]] = self.0;
        let [[a2, b2, x2], [c2, d2, y2]] = next.0;
        Affine([
            [a2 * a1 + b2 * c1, a2 * b1 + b2 * d1, a2 * x1 + b2 * y1 + x2],
            [c2 * a1 + d2 * c1, c2 * b1 + d2 * d1, c2 * x1 + d2 * y1 + y2],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Axis-aligned rectangle, boundary included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    /// Returns `None` for empty or zero-area boxes.
    pub fn new(min: Point, max: Point) -> Option<Self> {
        (min.x < max.x && min.y < max.y).then_some(Self { min, max })
    }

    /// The normalized image box `[0, 1] x [0, 1]`.
    pub const fn unit() -> Self {
        Rect {
            min: Point::new(0.0, 0.0),
            max: Point::new(1.0, 1.0),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.contains_with_tolerance(p, 0.0)
    }

    pub fn contains_with_tolerance(&self, p: Point, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotation_maps_center_to_itself() {
        let c = Point::new(0.5, 0.5);
        let r = Affine::rotation_about(c, 10f64.to_radians());
        let got = r.apply(c);
        assert_abs_diff_eq!(got.x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(got.y, 0.5, epsilon = 1e-15);
        let q = r.apply(Point::new(1.0, 0.5));
        assert_abs_diff_eq!(q.x, 0.5 + 0.5 * 10f64.to_radians().cos(), epsilon = 1e-15);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = Affine::rotation_about(Point::new(0.2, 0.3), 0.4);
        let b =
            Affine::scale_about(Point::new(0.5, 0.5), 1.3).then(&Affine::translation(0.1, -0.2));
        let p = Point::new(0.7, 0.1);
        let seq = b.apply(a.apply(p));
        let composed = a.then(&b).apply(p);
        assert_abs_diff_eq!(seq.x, composed.x, epsilon = 1e-14);
        assert_abs_diff_eq!(seq.y, composed.y, epsilon = 1e-14);
    }

    #[test]
    fn mirror_is_an_involution() {
        let m = Affine::mirror_x(0.5);
        assert_eq!(m.then(&m), Affine::identity());
    }

    #[test]
    fn degenerate_rect_rejected() {
        assert!(Rect::new(Point::new(0.0, 0.0), Point::new(0.0, 1.0)).is_none());
    }
}
