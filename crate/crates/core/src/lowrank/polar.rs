use super::RankOneAtom;
use crate::gcg::{GcgError, PolarAtom};
use ndarray::{Array1, Array2};

use crate::numkit::{svd_small, top_singular_pair, LinearOperator, NumError, PowerOptions, SVD_DIM_GUARD};

const DENSE_REL_ERROR: f64 = 1e-12;

fn densify<G: LinearOperator + ?Sized>(op: &G) -> Array2<f64> {
    let mut out = Array2::zeros((op.nrows(), op.ncols()));
    let mut e = Array1::zeros(op.ncols());
    for j in 0..op.ncols() {
        e[j] = 1.0;
        out.column_mut(j).assign(&op.apply(e.view()));
        e[j] = 0.0;
    }
    out
}

/// Polar oracle for a rank-one atomic set: an atom maximizing `uᵀ D v`.
pub trait FactorPolar<G: ?Sized> {
    fn polar(&mut self, direction: &G) -> Result<PolarAtom<RankOneAtom>, GcgError>;

    /// Maximizes `−uᵀ G v`; the atomic sets here are symmetric under `u ↦ −u`.
    fn polar_neg(&mut self, grad: &G) -> Result<PolarAtom<RankOneAtom>, GcgError> {
        let mut p = self.polar(grad)?;
        p.atom.u.mapv_inplace(|x| -x);
        Ok(p)
    }
}

/// Spectral norm and top singular pair of `direction`.
///
/// The reported additive error is `tol·value`. When the power iteration fails
/// to converge, small operators fall back to a dense SVD; larger ones are
/// retried once from a fresh start with twice the budget.
pub fn trace_polar<G: LinearOperator + ?Sized>(
    direction: &G,
    opts: &PowerOptions,
) -> Result<PolarAtom<RankOneAtom>, NumError> {
    let triple = match top_singular_pair(direction, opts) {
        Ok(t) => t,
        Err(NumError::NonConvergence { .. }) if direction.nrows().min(direction.ncols()) <= SVD_DIM_GUARD => {
            // Clustered top singular values stall the vector residual; a dense
            // decomposition is cheap at these sizes.
            let svd = svd_small(&densify(direction))?;
            let value = svd.s[0];
            let atom = RankOneAtom { u: svd.u.column(0).to_owned(), v: svd.vt.row(0).to_owned() };
            return Ok(PolarAtom { atom, value, additive_error: DENSE_REL_ERROR * value, factor: 1.0 });
        }
        Err(NumError::NonConvergence { .. }) => {
            let retry = PowerOptions { seed: opts.seed.wrapping_add(0x9e37_79b9), max_iter: 2 * opts.max_iter, ..*opts };
            top_singular_pair(direction, &retry)?
        }
        Err(e) => return Err(e),
    };
    let value = triple.sigma;
    Ok(PolarAtom { atom: RankOneAtom { u: triple.u, v: triple.v }, value, additive_error: opts.tol * value, factor: 1.0 })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TracePolar {
    pub power: PowerOptions,
}

impl<G: LinearOperator + ?Sized> FactorPolar<G> for TracePolar {
    fn polar(&mut self, direction: &G) -> Result<PolarAtom<RankOneAtom>, GcgError> {
        Ok(trace_polar(direction, &self.power)?)
    }
}
