use super::MAX_ORDER;
use crate::{Error, Result};

/// Default number of samples per curve for the sampling loss and for
/// rasterizing curve predictions.
pub const DEFAULT_SAMPLE_COUNT: usize = 100;

/// Re-parameterization applied to each grid parameter before the basis is
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reparam {
    #[default]
    Identity,
}

impl Reparam {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Reparam::Identity => t,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Writes the `n + 1` Bernstein weights at `t` into `out` without checks.
pub(crate) fn bernstein_into(n: usize, t: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n + 1);
    let u = 1.0 - t;
    for (i, w) in out.iter_mut().enumerate() {
        *w = binomial(n, i) * t.powi(i as i32) * u.powi((n - i) as i32);
    }
}

/// Bernstein basis polynomials of degree `n` evaluated at `t`.
pub fn bernstein_basis(n: usize, t: f64) -> Result<Vec<f64>> {
    if n == 0 || n > MAX_ORDER {
        return Err(Error::UnsupportedOrder(n));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("parameter t = {t} outside [0, 1]")));
    }
    let mut out = vec![0.0; n + 1];
    bernstein_into(n, t, &mut out);
    Ok(out)
}

/// Precomputed Bernstein weights for a fixed, uniformly spaced parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    order: usize,
    ts: Vec<f64>,
    // row-major, ts.len() x (order + 1)
    basis: Vec<f64>,
    reparam: Reparam,
}

impl SampleGrid {
    /// `count` parameters spaced uniformly over `[0, 1]`, endpoints included.
    pub fn new(order: usize, count: usize, reparam: Reparam) -> Result<Self> {
        if count < 2 {
            return Err(Error::argument(format!(
                "a sample grid needs at least 2 samples, got {count}"
            )));
        }
        let last = (count - 1) as f64;
        // j / last rather than j * step so both endpoints are exact
        let ts: Vec<f64> = (0..count).map(|j| j as f64 / last).collect();
        Self::with_params(order, ts, reparam)
    }

    /// Grid over caller-supplied parameters, which must be strictly increasing in `[0, 1]`.
    pub fn with_params(order: usize, ts: Vec<f64>, reparam: Reparam) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        if ts.is_empty() {
            return Err(Error::argument("empty parameter set"));
        }
        if ts.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Domain("grid parameters must lie in [0, 1]".into()));
        }
        if ts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument(
                "grid parameters must be strictly increasing",
            ));
        }
        let width = order + 1;
        let mut basis = vec![0.0; ts.len() * width];
        for (row, &t) in basis.chunks_exact_mut(width).zip(&ts) {
            bernstein_into(order, reparam.apply(t), row);
        }
        Ok(Self {
            order,
            ts,
            basis,
            reparam,
        })
    }

    /// Cubic grid with the default 100 samples.
    pub fn cubic_default() -> Self {
        Self::new(3, DEFAULT_SAMPLE_COUNT, Reparam::Identity).expect("valid default grid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn reparam(&self) -> Reparam {
        self.reparam
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let width = self.order + 1;
        &self.basis[j * width..(j + 1) * width]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.basis.chunks_exact(self.order + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cubic_basis_values() {
        assert_eq!(bernstein_basis(3, 0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(bernstein_basis(3, 1.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        let mid = bernstein_basis(3, 0.5).unwrap();
        for (got, want) in mid.iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn basis_domain_errors() {
        assert!(matches!(bernstein_basis(3, 1.5), Err(Error::Domain(_))));
        assert!(matches!(bernstein_basis(3, -0.01), Err(Error::Domain(_))));
        assert!(matches!(
            bernstein_basis(0, 0.5),
            Err(Error::UnsupportedOrder(0))
        ));
    }

    #[test]
    fn grid_shapes() {
        let g = SampleGrid::new(3, 2, Reparam::Identity).unwrap();
        assert_eq!(g.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.row(1), &[0.0, 0.0, 0.0, 1.0]);

        let g = SampleGrid::new(2, 3, Reparam::Identity).unwrap();
        assert_eq!(g.row(1), &[0.25, 0.5, 0.25]);

        let g = SampleGrid::cubic_default();
        assert_eq!(g.rows().len(), 100);
        for row in g.rows() {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert!(row.iter().all(|w| (0.0..=1.0).contains(w)));
        }
    }

    #[test]
    fn grid_needs_two_samples() {
        assert!(matches!(
            SampleGrid::new(3, 1, Reparam::Identity),
            Err(Error::Argument(_))
        ));
        assert!(SampleGrid::with_params(3, vec![0.5, 0.2], Reparam::Identity).is_err());
    }
}
