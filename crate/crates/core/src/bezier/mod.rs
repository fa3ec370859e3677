//! Bézier curves in normalized image coordinates.
//!
//! A curve of order `n` carries `n + 1` control points and is evaluated with
//! the Bernstein basis. Repeated sampling at a fixed parameter set goes
//! through a [`SampleGrid`], which caches the basis matrix so sampling is a
//! single matrix product.

mod basis;
mod fit;
mod transform;

pub use basis::{bernstein_basis, Reparam, SampleGrid, DEFAULT_SAMPLE_COUNT};
pub use fit::{fit_least_squares, fit_with_params, Fit, FitOptions, ParamMethod, Polyline};
pub use transform::{Affine, Rect};

use crate::{Error, Point, Result};

/// Maximum supported curve order.
pub const MAX_ORDER: usize = 5;

/// Number of samples used by [`BezierCurve::clip_to_box`] for its dense scan.
const CLIP_SCAN_SAMPLES: usize = 100;
/// Parameter tolerance of the boundary bisection in [`BezierCurve::clip_to_box`].
const CLIP_PARAM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    control_points: Vec<Point>,
}

impl BezierCurve {
    /// Builds a curve from `order + 1` control points.
    pub fn new(control_points: Vec<Point>) -> Result<Self> {
        if control_points.len() < 2 {
            return Err(Error::argument(format!(
                "a Bézier curve needs at least 2 control points, got {}",
                control_points.len()
            )));
        }
        if control_points.len() - 1 > MAX_ORDER {
            return Err(Error::UnsupportedOrder(control_points.len() - 1));
        }
        if let Some(p) = control_points.iter().find(|p| !p.is_finite()) {
            return Err(Error::argument(format!("non-finite control point {p:?}")));
        }
        Ok(Self { control_points })
    }

    /// Cubic curve from four control points.
    pub fn cubic(p0: Point, p1: Point, p2: Point, p3: Point) -> Result<Self> {
        Self::new(vec![p0, p1, p2, p3])
    }

    /// Cubic curve from the flat `[x0, y0, .., x3, y3]` layout used on disk.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::argument("odd number of coordinates"));
        }
        Self::new(
            coords
                .chunks_exact(2)
                .map(|c| Point::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.control_points
            .iter()
            .flat_map(|p| [p.x, p.y])
            .collect()
    }

    pub fn order(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    /// Evaluates the curve at `t`. `t` is not range-checked; values outside
    /// `[0, 1]` extrapolate the polynomial.
    pub fn evaluate(&self, t: f64) -> Point {
        let n = self.order();
        let mut weights = [0.0; MAX_ORDER + 1];
        basis::bernstein_into(n, t, &mut weights[..=n]);
        self.combine(&weights[..=n])
    }

    fn combine(&self, weights: &[f64]) -> Point {
        self.control_points
            .iter()
            .zip(weights)
            .fold(Point::default(), |acc, (p, &w)| {
                Point::new(acc.x + w * p.x, acc.y + w * p.y)
            })
    }

    /// Samples the curve at every parameter of `grid`.
    pub fn sample(&self, grid: &SampleGrid) -> Result<Vec<Point>> {
        if grid.order() != self.order() {
            return Err(Error::argument(format!(
                "grid order {} does not match curve order {}",
                grid.order(),
                self.order()
            )));
        }
        Ok(grid.rows().map(|row| self.combine(row)).collect())
    }

    /// Applies `affine` to every control point. Because the Bernstein weights
    /// of each sample sum to one, this transforms the whole curve.
    pub fn transformed(&self, affine: &Affine) -> BezierCurve {
        BezierCurve {
            control_points: self
                .control_points
                .iter()
                .map(|&p| affine.apply(p))
                .collect(),
        }
    }

    /// Returns the cubic segment covering `[t0, t1]`, re-parameterized over `[0, 1]`.
    ///
    /// Each new control point is the blossom of the original curve at
    /// `(t0,t0,t0)`, `(t0,t0,t1)`, `(t0,t1,t1)` and `(t1,t1,t1)`.
    pub fn cut(&self, t0: f64, t1: f64) -> Result<BezierCurve> {
        if self.order() != 3 {
            return Err(Error::UnsupportedOrder(self.order()));
        }
        if !(0.0..=1.0).contains(&t0) || !(0.0..=1.0).contains(&t1) {
            return Err(Error::Domain(format!(
                "cut parameters ({t0}, {t1}) must lie in [0, 1]"
            )));
        }
        if t0 >= t1 {
            return Err(Error::argument(format!(
                "cut requires t0 < t1, got ({t0}, {t1})"
            )));
        }
        let (u0, u1) = (1.0 - t0, 1.0 - t1);
        let p = &self.control_points;
        let blossom = |(ta, ua): (f64, f64), (tb, ub): (f64, f64), (tc, uc): (f64, f64)| {
            let w0 = ua * ub * uc;
            let w1 = ta * ub * uc + ua * tb * uc + ua * ub * tc;
            let w2 = ta * tb * uc + ua * tb * tc + ta * ub * tc;
            let w3 = ta * tb * tc;
            Point::new(
                w0 * p[0].x + w1 * p[1].x + w2 * p[2].x + w3 * p[3].x,
                w0 * p[0].y + w1 * p[1].y + w2 * p[2].y + w3 * p[3].y,
            )
        };
        let a = (t0, u0);
        let b = (t1, u1);
        Ok(BezierCurve {
            control_points: vec![
                blossom(a, a, a),
                blossom(a, a, b),
                blossom(a, b, b),
                blossom(b, b, b),
            ],
        })
    }

    /// Cuts the curve down to its longest contiguous run inside `rect`.
    ///
    /// The run is located with a 100-sample scan and both boundaries are then
    /// refined by bisection to `1e-4` in `t`, keeping the in-box side. Returns
    /// `None` when no sample falls inside. A curve whose scan is entirely
    /// inside is returned unchanged.
    pub fn clip_to_box(&self, rect: &Rect) -> Result<Option<BezierCurve>> {
        if self.order() != 3 {
            return Err(Error::UnsupportedOrder(self.order()));
        }
        let last = CLIP_SCAN_SAMPLES - 1;
        let param = |j: usize| j as f64 / last as f64;
        let inside: Vec<bool> = (0..CLIP_SCAN_SAMPLES)
            .map(|j| rect.contains(self.evaluate(param(j))))
            .collect();

        // longest run of consecutive in-box samples, first one wins on ties
        let mut best: Option<(usize, usize)> = None;
        let mut start = None;
        for (j, &flag) in inside.iter().chain(std::iter::once(&false)).enumerate() {
            match (flag, start) {
                (true, None) => start = Some(j),
                (false, Some(s)) => {
                    if best.is_none_or(|(bs, be)| j - 1 - s > be - bs) {
                        best = Some((s, j - 1));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        let Some((first, end)) = best else {
            return Ok(None);
        };
        if first == 0 && end == last {
            return Ok(Some(self.clone()));
        }

        let is_inside = |t: f64| rect.contains(self.evaluate(t));
        let t0 = if first == 0 {
            0.0
        } else {
            let (mut out, mut inn) = (param(first - 1), param(first));
            while inn - out > CLIP_PARAM_TOL {
                let mid = 0.5 * (out + inn);
                if is_inside(mid) {
                    inn = mid;
                } else {
                    out = mid;
                }
            }
            inn
        };
        let t1 = if end == last {
            1.0
        } else {
            let (mut inn, mut out) = (param(end), param(end + 1));
            while out - inn > CLIP_PARAM_TOL {
                let mid = 0.5 * (out + inn);
                if is_inside(mid) {
                    inn = mid;
                } else {
                    out = mid;
                }
            }
            inn
        };
        if t1 - t0 <= f64::EPSILON {
            return Ok(None);
        }
        self.cut(t0, t1).map(Some)
    }

    /// Closest point on the curve to `p`, as `(t, distance)`.
    ///
    /// Coarse scan followed by golden-section refinement around the best sample.
    pub fn closest_point(&self, p: Point) -> (f64, f64) {
        const COARSE: usize = 128;
        let dist2 = |t: f64| {
            let d = self.evaluate(t) - p;
            d.dot(d)
        };
        let (best_j, _) = (0..=COARSE)
            .map(|j| (j, dist2(j as f64 / COARSE as f64)))
            .fold(
                (0, f64::INFINITY),
                |acc, (j, d)| if d < acc.1 { (j, d) } else { acc },
            );
        let mut lo = (best_j.saturating_sub(1)) as f64 / COARSE as f64;
        let mut hi = ((best_j + 1).min(COARSE)) as f64 / COARSE as f64;
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut a = hi - phi * (hi - lo);
        let mut b = lo + phi * (hi - lo);
        let (mut fa, mut fb) = (dist2(a), dist2(b));
        for _ in 0..80 {
            if fa < fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - phi * (hi - lo);
                fa = dist2(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + phi * (hi - lo);
                fb = dist2(b);
            }
        }
        let candidates = [lo, hi, 0.5 * (lo + hi), best_j as f64 / COARSE as f64];
        let (t, d2) =
            candidates
                .iter()
                .map(|&t| (t, dist2(t)))
                .fold(
                    (0.0, f64::INFINITY),
                    |acc, c| if c.1 < acc.1 { c } else { acc },
                );
        (t, d2.sqrt())
    }

    /// Root-mean-square distance from `points` to this curve.
    pub fn rms_distance(&self, points: &[Point]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let sum: f64 = points
            .iter()
            .map(|&p| {
                let (_, d) = self.closest_point(p);
                d * d
            })
            .sum();
        (sum / points.len() as f64).sqrt()
    }
}

/// Samples `curve` on `grid`. Free-function form of [`BezierCurve::sample`].
pub fn sample_curve(curve: &BezierCurve, grid: &SampleGrid) -> Result<Vec<Point>> {
    curve.sample(grid)
}

pub fn affine_transform(curve: &BezierCurve, affine: &Affine) -> BezierCurve {
    curve.transformed(affine)
}

pub fn cut_curve(curve: &BezierCurve, t0: f64, t1: f64) -> Result<BezierCurve> {
    curve.cut(t0, t1)
}

pub fn clip_to_box(curve: &BezierCurve, rect: &Rect) -> Result<Option<BezierCurve>> {
    curve.clip_to_box(rect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn arch() -> BezierCurve {
        BezierCurve::cubic(
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        )
        .unwrap()
    }

    fn diagonal() -> BezierCurve {
        BezierCurve::cubic(
            Point::new(0.0, 0.0),
            Point::new(1.0 / 3.0, 1.0 / 3.0),
            Point::new(2.0 / 3.0, 2.0 / 3.0),
            Point::new(1.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_control_points() {
        assert!(BezierCurve::new(vec![Point::new(0.0, 0.0)]).is_err());
        assert!(BezierCurve::new(vec![Point::new(0.0, 0.0), Point::new(f64::NAN, 1.0)]).is_err());
        assert!(matches!(
            BezierCurve::new(vec![Point::default(); 7]),
            Err(Error::UnsupportedOrder(6))
        ));
    }

    #[test]
    fn samples_straight_line_and_arch() {
        let grid = SampleGrid::new(3, 3, Reparam::Identity).unwrap();
        let line = diagonal().sample(&grid).unwrap();
        assert_abs_diff_eq!(line[1].x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(line[1].y, 0.5, epsilon = 1e-15);

        let pts = arch().sample(&grid).unwrap();
        assert_eq!(pts[0], Point::new(0.0, 0.0));
        assert_eq!(pts[2], Point::new(1.0, 0.0));
        assert_abs_diff_eq!(pts[1].x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pts[1].y, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn sample_rejects_order_mismatch() {
        let grid = SampleGrid::new(2, 10, Reparam::Identity).unwrap();
        assert!(matches!(arch().sample(&grid), Err(Error::Argument(_))));
    }

    #[test]
    fn cut_full_range_is_identity() {
        let c = arch();
        assert_eq!(c.cut(0.0, 1.0).unwrap(), c);
    }

    #[test]
    fn cut_first_half_ends_at_midpoint() {
        let cut = arch().cut(0.0, 0.5).unwrap();
        let end = cut.control_points()[3];
        assert_abs_diff_eq!(end.x, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(end.y, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn cut_errors() {
        let c = arch();
        assert!(matches!(c.cut(0.5, 0.5), Err(Error::Argument(_))));
        assert!(matches!(c.cut(0.7, 0.2), Err(Error::Argument(_))));
        assert!(matches!(c.cut(-0.1, 0.2), Err(Error::Domain(_))));
        let quad = BezierCurve::new(vec![
            Point::default(),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        assert!(matches!(
            quad.cut(0.0, 0.5),
            Err(Error::UnsupportedOrder(2))
        ));
    }

    #[test]
    fn clip_inside_outside_and_crossing() {
        let unit = Rect::unit();
        let inside = BezierCurve::cubic(
            Point::new(0.1, 0.1),
            Point::new(0.2, 0.5),
            Point::new(0.6, 0.5),
            Point::new(0.9, 0.9),
        )
        .unwrap();
        assert_eq!(inside.clip_to_box(&unit).unwrap(), Some(inside.clone()));

        let outside = inside.transformed(&Affine::translation(3.0, 0.0));
        assert_eq!(outside.clip_to_box(&unit).unwrap(), None);

        let crossing = BezierCurve::cubic(
            Point::new(-0.5, 0.5),
            Point::new(-0.5 + 1.0 / 3.0, 0.5),
            Point::new(-0.5 + 2.0 / 3.0, 0.5),
            Point::new(0.5, 0.5),
        )
        .unwrap();
        let clipped = crossing.clip_to_box(&unit).unwrap().unwrap();
        let start = clipped.control_points()[0];
        assert_abs_diff_eq!(start.x, 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(start.y, 0.5, epsilon = 1e-12);
        assert!(start.x >= 0.0);
        assert_abs_diff_eq!(clipped.control_points()[3].x, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn clip_keeps_longest_run() {
        // dips below the box in the middle: two in-box runs, the right one longer
        let curve = BezierCurve::cubic(
            Point::new(0.05, 0.5),
            Point::new(0.2, -0.6),
            Point::new(0.4, -0.2),
            Point::new(0.95, 0.9),
        )
        .unwrap();
        let unit = Rect::unit();
        let clipped = curve.clip_to_box(&unit).unwrap().unwrap();
        let grid = SampleGrid::new(3, 100, Reparam::Identity).unwrap();
        for p in clipped.sample(&grid).unwrap() {
            assert!(unit.contains_with_tolerance(p, 1e-6), "{p:?}");
        }
        assert_abs_diff_eq!(clipped.control_points()[3].x, 0.95, epsilon = 1e-12);
    }

    #[test]
    fn closest_point_on_line() {
        let (t, d) = diagonal().closest_point(Point::new(1.0, 0.0));
        assert_abs_diff_eq!(t, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(d, 0.5f64.sqrt(), epsilon = 1e-12);
    }
}
