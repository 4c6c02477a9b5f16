//! Reference solvers: accelerated proximal gradient with `ℓ1` and trace-norm
//! shrinkage, and a fixed-rank alternating solver for the two-view model.

mod apg;
mod bcd;

pub use apg::{run_apg, run_apg_tracked, ApgOptions, ApgOutput};
pub use bcd::{solve_bcd_multiview, BcdOptions, BcdOutput};

use ndarray::Array2;

use crate::numkit::{spectral_norm, svd_small, NumError};

/// Proximal map of `τ·r` for a norm `r`, with the pieces APG needs.
pub trait ProxOperator {
    fn apply(&self, z: &Array2<f64>, tau: f64) -> Array2<f64>;

    /// `r(w)`
    fn norm(&self, w: &Array2<f64>) -> f64;

    /// `r°(g)`, for the duality gap.
    fn dual_norm(&self, g: &Array2<f64>) -> f64;

    /// Nonzeros or rank, reported as the atom count.
    fn support_size(&self, w: &Array2<f64>) -> usize;
}

/// Soft-thresholding, `(1 − τ/|z|)₊ z` entrywise.
pub fn prox_l1(z: &Array2<f64>, tau: f64) -> Array2<f64> {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    z.mapv(|x| x.signum() * (x.abs() - tau).max(0.0))
}

/// Singular-value shrinkage `U diag((σ − τ)₊) Vᵀ`.
pub fn prox_trace(z: &Array2<f64>, tau: f64) -> Result<Array2<f64>, NumError> {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    let mut svd = svd_small(z)?;
    svd.s.mapv_inplace(|s| (s - tau).max(0.0));
    Ok(svd.reconstruct())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct L1Prox;

impl ProxOperator for L1Prox {
    fn apply(&self, z: &Array2<f64>, tau: f64) -> Array2<f64> {
        prox_l1(z, tau)
    }

    fn norm(&self, w: &Array2<f64>) -> f64 {
        w.iter().map(|x| x.abs()).sum()
    }

    fn dual_norm(&self, g: &Array2<f64>) -> f64 {
        g.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn support_size(&self, w: &Array2<f64>) -> usize {
        w.iter().filter(|x| **x != 0.0).count()
    }
}

/// Trace-norm shrinkage; dense SVD per call, so test-scale only.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceProx;

impl ProxOperator for TraceProx {
    fn apply(&self, z: &Array2<f64>, tau: f64) -> Array2<f64> {
        prox_trace(z, tau).expect("trace prox is limited to matrices within the SVD guard")
    }

    fn norm(&self, w: &Array2<f64>) -> f64 {
        svd_small(w).expect("within the SVD guard").s.sum()
    }

    fn dual_norm(&self, g: &Array2<f64>) -> f64 {
        spectral_norm(g).expect("spectral norm")
    }

    fn support_size(&self, w: &Array2<f64>) -> usize {
        let s = svd_small(w).expect("within the SVD guard").s;
        let top = s.first().copied().unwrap_or(0.0);
        s.iter().filter(|&&x| x > 1e-12 * top.max(f64::MIN_POSITIVE)).count()
    }
}
