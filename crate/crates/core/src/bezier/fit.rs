//! Least-squares Bézier fitting of annotated lane polylines.

use nalgebra::{DMatrix, SVD};

use super::{basis::bernstein_into, BezierCurve, MAX_ORDER};
use crate::{Error, ImageSize, Point, Result};

/// Relative singular-value cutoff below which a fit is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Ordered lane keypoints in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point>,
    image_size: ImageSize,
}

impl Polyline {
    pub fn new(points: Vec<Point>, image_size: ImageSize) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::argument(format!(
                "a polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::argument(format!("non-finite polyline point {p:?}")));
        }
        Ok(Self { points, image_size })
    }

    /// Builds a polyline from pixel coordinates, normalizing by `image_size`.
    pub fn from_pixels(pixels: &[Point], image_size: ImageSize) -> Result<Self> {
        Self::new(
            pixels.iter().map(|&p| image_size.normalize(p)).collect(),
            image_size,
        )
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn image_size(&self) -> ImageSize {
        self.image_size
    }

    pub fn to_pixels(&self) -> Vec<Point> {
        self.points
            .iter()
            .map(|&p| self.image_size.to_pixels(p))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Resamples the polyline to `count` points evenly spaced by arc length.
    /// Endpoints are kept.
    pub fn densified(&self, count: usize) -> Polyline {
        let count = count.max(2);
        let total = self.length();
        if total == 0.0 {
            return Polyline {
                points: vec![self.points[0]; count],
                image_size: self.image_size,
            };
        }
        let mut out = Vec::with_capacity(count);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 0..count {
            let target = total * k as f64 / (count - 1) as f64;
            loop {
                let len = self.points[seg].distance(self.points[seg + 1]);
                if target <= seg_start + len || seg + 2 == self.points.len() {
                    let f = if len > 0.0 {
                        ((target - seg_start) / len).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    out.push(self.points[seg].lerp(self.points[seg + 1], f));
                    break;
                }
                seg_start += len;
                seg += 1;
            }
        }
        *out.last_mut().expect("count >= 2") = *self.points.last().expect("non-empty");
        Polyline {
            points: out,
            image_size: self.image_size,
        }
    }
}

/// How curve parameters are assigned to the polyline points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamMethod {
    /// Normalized cumulative chord length.
    #[default]
    ChordLength,
    /// Cumulative square root of chord length.
    Centripetal,
    /// Evenly spaced `i / (m - 1)`.
    Uniform,
}

impl ParamMethod {
    pub fn assign(self, points: &[Point]) -> Vec<f64> {
        let m = points.len();
        let uniform = || (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        let step: fn(f64) -> f64 = match self {
            ParamMethod::Uniform => return uniform(),
            ParamMethod::ChordLength => |d| d,
            ParamMethod::Centripetal => f64::sqrt,
        };
        let mut acc = 0.0;
        let mut ts = Vec::with_capacity(m);
        ts.push(0.0);
        for w in points.windows(2) {
            acc += step(w[0].distance(w[1]));
            ts.push(acc);
        }
        if acc == 0.0 {
            return uniform();
        }
        for t in &mut ts {
            *t /= acc;
        }
        ts[m - 1] = 1.0;
        ts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub order: usize,
    pub param: ParamMethod,
    /// Refine the point parameters by minimizing the squared residual of the
    /// linear fit over them. Starts from `param` and from the other two
    /// parameterizations and keeps the best result. The first and last
    /// parameters stay at 0 and 1.
    pub refine: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            order: 3,
            param: ParamMethod::ChordLength,
            refine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub curve: BezierCurve,
    /// Set when the basis matrix was rank deficient and the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
    /// Parameters used for the final solve, one per fitted point.
    pub params: Vec<f64>,
}

/// Fits control points of the given order to explicit `(point, t)` pairs.
///
/// Solves the overdetermined system `B · P = K` through an SVD of the basis
/// matrix, which yields the minimum-norm least-squares solution when the
/// basis is rank deficient.
pub fn fit_with_params(points: &[Point], ts: &[f64], order: usize) -> Result<Fit> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if points.len() != ts.len() {
        return Err(Error::argument("points and parameters differ in length"));
    }
    if points.len() < 2 {
        return Err(Error::argument("need at least 2 points to fit"));
    }
    let m = points.len();
    let width = order + 1;
    let mut weights = vec![0.0; m * width];
    for (row, &t) in weights.chunks_exact_mut(width).zip(ts) {
        bernstein_into(order, t, row);
    }
    let basis = DMatrix::from_row_slice(m, width, &weights);
    let rhs = DMatrix::from_fn(m, 2, |i, j| if j == 0 { points[i].x } else { points[i].y });

    let svd = SVD::new(basis, true, true);
    let max_sv = svd.singular_values.max();
    let cutoff = (max_sv * RANK_TOL).max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let solution = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::NumericalDegeneracy(e.to_string()))?;

    let control_points = (0..width)
        .map(|i| Point::new(solution[(i, 0)], solution[(i, 1)]))
        .collect();
    Ok(Fit {
        curve: BezierCurve::new(control_points)?,
        rank_deficient: rank < width,
        params: ts.to_vec(),
    })
}

/// Fits a Bézier curve to a polyline by linear least squares.
///
/// The end control points are free, not pinned to the polyline ends.
/// Polylines with fewer than `order + 1` points are first densified by linear
/// interpolation to `2 * (order + 1)` points.
pub fn fit_least_squares(polyline: &Polyline, options: &FitOptions) -> Result<Fit> {
    let order = options.order;
    if order == 0 || order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let densified;
    let points = if polyline.len() < order + 1 {
        densified = polyline.densified(2 * (order + 1));
        densified.points()
    } else {
        polyline.points()
    };

    let ts = options.param.assign(points);
    let fit = fit_with_params(points, &ts, order)?;
    if !options.refine || fit.rank_deficient || points.len() < 3 {
        return Ok(fit);
    }
    // Candidates are ranked by the geometric residual, so refinement never
    // makes the returned fit worse than the plain one. They must also stay
    // about as close to the polyline as the plain fit does; otherwise a
    // spur that loops out to a single noisy point can win on residual.
    let tube = TUBE_FACTOR * deviation_from_polyline(&fit.curve, points);
    let mut best_rms = fit.curve.rms_distance(points);
    let mut best = fit;
    let starts = [
        options.param,
        ParamMethod::ChordLength,
        ParamMethod::Centripetal,
        ParamMethod::Uniform,
    ];
    for (k, method) in starts.iter().enumerate() {
        if starts[..k].contains(method) {
            continue;
        }
        let init = if k == 0 {
            ts.clone()
        } else {
            method.assign(points)
        };
        let Some(refined) = refine_params(points, order, init) else {
            continue;
        };
        let candidate = fit_with_params(points, &refined, order)?;
        let rms = candidate.curve.rms_distance(points);
        if !candidate.rank_deficient
            && rms < best_rms
            && deviation_from_polyline(&candidate.curve, points) <= tube
        {
            best_rms = rms;
            best = candidate;
        }
    }
    Ok(best)
}

const REFINE_MAX_ITERS: usize = 200;
const TUBE_FACTOR: f64 = 1.5;
const TUBE_SAMPLES: usize = 100;

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

/// Largest distance from a curve sample to the polyline.
fn deviation_from_polyline(curve: &BezierCurve, points: &[Point]) -> f64 {
    (0..TUBE_SAMPLES)
        .map(|j| {
            let c = curve.evaluate(j as f64 / (TUBE_SAMPLES - 1) as f64);
            points
                .windows(2)
                .map(|w| segment_distance(c, w[0], w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}
/// Steps that stretch the control polygon beyond this multiple of the
/// polyline length are rejected. Without it the parameters can bunch up at
/// one end while the control points run off to infinity.
const CONTROL_POLYGON_LIMIT: f64 = 2.0;

/// Linear least-squares solve at fixed parameters through a thin QR.
/// Returns the orthonormal basis of the column space, the control points and
/// the residual rows, or `None` if the basis lost rank.
struct Projection {
    q: DMatrix<f64>,
    ctrl: Vec<Point>,
    residual: Vec<Point>,
    cost: f64,
}

fn project(points: &[Point], ts: &[f64], order: usize) -> Option<Projection> {
    let m = points.len();
    let width = order + 1;
    let mut weights = vec![0.0; m * width];
    for (row, &t) in weights.chunks_exact_mut(width).zip(ts) {
        bernstein_into(order, t, row);
    }
    let basis = DMatrix::from_row_slice(m, width, &weights);
    let qr = basis.clone().qr();
    let r = qr.r();
    let max_diag = (0..width).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..width).any(|i| r[(i, i)].abs() <= max_diag * RANK_TOL) {
        return None;
    }
    let q = qr.q();
    let rhs = DMatrix::from_fn(m, 2, |i, j| if j == 0 { points[i].x } else { points[i].y });
    let qtk = q.transpose() * &rhs;
    let coef = r.solve_upper_triangular(&qtk)?;
    let ctrl: Vec<Point> = (0..width)
        .map(|i| Point::new(coef[(i, 0)], coef[(i, 1)]))
        .collect();
    let fitted = basis * coef;
    let residual: Vec<Point> = (0..m)
        .map(|i| Point::new(fitted[(i, 0)] - points[i].x, fitted[(i, 1)] - points[i].y))
        .collect();
    let cost = residual.iter().map(|d| d.dot(*d)).sum();
    Some(Projection {
        q,
        ctrl,
        residual,
        cost,
    })
}

fn derivative(ctrl: &[Point], t: f64) -> Point {
    let order = ctrl.len() - 1;
    let mut w = [0.0; MAX_ORDER];
    bernstein_into(order - 1, t, &mut w[..order]);
    ctrl.windows(2)
        .zip(&w)
        .fold(Point::default(), |acc, (pp, &b)| acc + (pp[1] - pp[0]) * b)
        * order as f64
}

/// Levenberg-Marquardt on the interior parameters with the control points
/// eliminated (variable projection). Returns the refined parameters.
///
/// With `Q` an orthonormal basis of the column space and `d_j` the curve
/// derivative at point `j`, the Gauss-Newton matrix is
/// `diag(|d_j|²) - (d_j · d_k)(q_j · q_k)` and the gradient is `d_j · r_j`.
fn refine_params(points: &[Point], order: usize, mut ts: Vec<f64>) -> Option<Vec<f64>> {
    let m = points.len();
    let inner = m - 2;
    let mut current = project(points, &ts, order)?;
    let scale = points
        .iter()
        .map(|p| p.dot(*p))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let limit = CONTROL_POLYGON_LIMIT * points.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();
    let sane =
        |p: &Projection| p.ctrl.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>() <= limit;
    let mut mu = 1e-3;
    for _ in 0..REFINE_MAX_ITERS {
        if current.cost <= 1e-30 * scale {
            break;
        }
        let ders: Vec<Point> = ts[1..m - 1]
            .iter()
            .map(|&t| derivative(&current.ctrl, t))
            .collect();
        let q = &current.q;
        let mut h = DMatrix::<f64>::zeros(inner, inner);
        let mut g = nalgebra::DVector::<f64>::zeros(inner);
        for a in 0..inner {
            let qa = q.row(a + 1);
            for b in 0..=a {
                let v = -ders[a].dot(ders[b]) * qa.dot(&q.row(b + 1));
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
            h[(a, a)] += ders[a].dot(ders[a]);
            g[a] = ders[a].dot(current.residual[a + 1]);
        }
        let diag: Vec<f64> = (0..inner).map(|a| h[(a, a)].max(1e-300)).collect();

        let mut accepted = false;
        while mu <= 1e8 {
            let mut damped = h.clone();
            for (a, d) in diag.iter().enumerate() {
                damped[(a, a)] += mu * d;
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step {
                let mut trial_ts = ts.clone();
                for a in 0..inner {
                    trial_ts[a + 1] = (ts[a + 1] + step[a]).clamp(0.0, 1.0);
                }
                if let Some(trial) = project(points, &trial_ts, order) {
                    if trial.cost < current.cost && sane(&trial) {
                        let gain = (current.cost - trial.cost) / current.cost;
                        ts = trial_ts;
                        current = trial;
                        mu = (mu / 3.0).max(1e-12);
                        accepted = gain >= 1e-12;
                        break;
                    }
                }
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    Some(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SIZE: ImageSize = ImageSize::new(590, 1640);

    fn known_cubic() -> BezierCurve {
        BezierCurve::cubic(
            Point::new(0.2, 0.95),
            Point::new(0.35, 0.7),
            Point::new(0.42, 0.55),
            Point::new(0.48, 0.4),
        )
        .unwrap()
    }

    #[test]
    fn recovers_cubic_from_exact_samples() {
        let curve = known_cubic();
        let ts: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let pts: Vec<Point> = ts.iter().map(|&t| curve.evaluate(t)).collect();
        let fit = fit_with_params(&pts, &ts, 3).unwrap();
        assert!(!fit.rank_deficient);
        for (a, b) in fit
            .curve
            .control_points()
            .iter()
            .zip(curve.control_points())
        {
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-6);
            assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-6);
        }
    }

    #[test]
    fn collinear_points_fit_a_line() {
        let pts: Vec<Point> = (0..20)
            .map(|i| {
                let v = 0.1 + 0.04 * i as f64 + 0.001 * (i * i) as f64;
                Point::new(v, v)
            })
            .collect();
        let line = Polyline::new(pts, SIZE).unwrap();
        let fit = fit_least_squares(&line, &FitOptions::default()).unwrap();
        for p in fit.curve.control_points() {
            assert_abs_diff_eq!(p.x, p.y, epsilon = 1e-9);
        }
    }

    #[test]
    fn endpoints_are_not_pinned() {
        // noisy samples: the least-squares curve need not pass through the ends
        let curve = known_cubic();
        let pts: Vec<Point> = (0..30)
            .map(|i| {
                let p = curve.evaluate(i as f64 / 29.0);
                let wiggle = if i % 2 == 0 { 0.01 } else { -0.01 };
                Point::new(p.x + wiggle, p.y)
            })
            .collect();
        let fit = fit_least_squares(
            &Polyline::new(pts.clone(), SIZE).unwrap(),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.curve.control_points()[0] != pts[0]);
    }

    #[test]
    fn short_polylines_are_densified() {
        let line = Polyline::new(vec![Point::new(0.1, 0.9), Point::new(0.5, 0.3)], SIZE).unwrap();
        let fit = fit_least_squares(&line, &FitOptions::default()).unwrap();
        assert!(!fit.rank_deficient);
        assert_eq!(fit.params.len(), 8);
        let dir = Point::new(0.4, -0.6);
        for &p in fit.curve.control_points() {
            assert_abs_diff_eq!((p - Point::new(0.1, 0.9)).cross(dir), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn repeated_points_flag_rank_deficiency() {
        let pts = vec![Point::new(0.3, 0.3); 6];
        let line = Polyline::new(pts, SIZE).unwrap();
        let fit = fit_least_squares(&line, &FitOptions::default()).unwrap();
        // uniform fallback keeps the system full rank; a constant curve comes back
        assert!(!fit.rank_deficient);
        for p in fit.curve.control_points() {
            assert_abs_diff_eq!(p.x, 0.3, epsilon = 1e-12);
        }

        let ts = vec![0.5; 6];
        let fit = fit_with_params(&[Point::new(0.3, 0.3); 6], &ts, 3).unwrap();
        assert!(fit.rank_deficient);
        assert_abs_diff_eq!(fit.curve.evaluate(0.5).x, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_short_input() {
        assert!(Polyline::new(vec![Point::new(0.0, 0.0)], SIZE).is_err());
        assert!(fit_with_params(&[Point::new(0.0, 0.0)], &[0.0], 3).is_err());
    }

    #[test]
    fn chord_length_params_span_unit_interval() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 1.0),
        ];
        assert_eq!(ParamMethod::ChordLength.assign(&pts), vec![0.0, 0.75, 1.0]);
        assert_eq!(ParamMethod::Uniform.assign(&pts), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn centripetal_params_use_square_root_spacing() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 1.0),
        ];
        assert_eq!(
            ParamMethod::Centripetal.assign(&pts),
            vec![0.0, 2.0 / 3.0, 1.0]
        );
    }

    #[test]
    fn densify_keeps_ends_and_spacing() {
        let line = Polyline::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
            ],
            SIZE,
        )
        .unwrap();
        let d = line.densified(5);
        assert_eq!(d.points()[0], Point::new(0.0, 0.0));
        assert_eq!(d.points()[4], Point::new(1.0, 1.0));
        assert_abs_diff_eq!(d.points()[2].x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.points()[2].y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pixel_round_trip() {
        let px = vec![Point::new(123.456, 300.25), Point::new(1600.0, 589.0)];
        let line = Polyline::from_pixels(&px, SIZE).unwrap();
        for (a, b) in line.to_pixels().iter().zip(&px) {
            assert!(((a.x - b.x) / b.x).abs() < 1e-9);
            assert!(((a.y - b.y) / b.y).abs() < 1e-9);
        }
    }
}
