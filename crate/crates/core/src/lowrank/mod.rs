//! Rank-one atomic gauges: the trace norm and its generalization with a
//! custom column norm on `U`, solved with factored iterates `W = UV`.

mod factored;
mod improve;
mod polar;
mod problem;
mod solve;

pub use factored::{FactoredLoss, Materialized};
pub use improve::{LocalImprove, LocalMethod};
pub use polar::{trace_polar, FactorPolar, TracePolar};
pub use problem::LowRankProblem;
pub use solve::{solve_lowrank_gcg, solve_matrix_completion, solve_multiclass_tracenorm, LowRankOptions};

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::multiview::ViewSplit;
use crate::numkit::{svd_small, NumError};

/// Norm applied to the columns of `U`; rows of `V` always use `ℓ2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnNorm {
    L2,
    /// `max(‖a‖/β, ‖b‖/γ)` for a column split into an x-block `a` and a y-block `b`.
    TwoView(ViewSplit),
}

impl ColumnNorm {
    /// `‖c‖_c²`
    pub fn sq(&self, c: ArrayView1<f64>) -> f64 {
        match self {
            Self::L2 => c.dot(&c),
            Self::TwoView(split) => {
                let (a, b) = split.blocks(c);
                (a.dot(&a) / (split.beta * split.beta)).max(b.dot(&b) / (split.gamma * split.gamma))
            }
        }
    }

    /// A smooth upper bound on `‖c‖_c²` and its gradient. Exact for `ℓ2`;
    /// the two-view max is replaced by `τ·log(e^{x/τ} + e^{y/τ})`.
    pub fn smoothed_sq(&self, c: ArrayView1<f64>, tau: f64) -> (f64, Array1<f64>) {
        match self {
            Self::L2 => (c.dot(&c), &c * 2.0),
            Self::TwoView(split) => {
                let (a, b) = split.blocks(c);
                let (b2, g2) = (split.beta * split.beta, split.gamma * split.gamma);
                let x = a.dot(&a) / b2;
                let y = b.dot(&b) / g2;
                let top = x.max(y);
                let (ex, ey) = (((x - top) / tau).exp(), ((y - top) / tau).exp());
                let value = top + tau * (ex + ey).ln();
                let (px, py) = (ex / (ex + ey), ey / (ex + ey));
                let mut grad = Array1::zeros(c.len());
                grad.slice_mut(s![..split.n1]).assign(&(&a * (2.0 * px / b2)));
                grad.slice_mut(s![split.n1..]).assign(&(&b * (2.0 * py / g2)));
                (value, grad)
            }
        }
    }
}

/// `u vᵀ` with `‖u‖_c ≤ 1` and `‖v‖₂ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneAtom {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
}

/// Factored iterate `W = UV` and the gauge bound `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// `n × t`
    pub u: Array2<f64>,
    /// `t × m`
    pub v: Array2<f64>,
    pub rho: f64,
    pub norm: ColumnNorm,
}

impl FactorModel {
    pub fn empty(rows: usize, cols: usize, norm: ColumnNorm) -> Self {
        Self { u: Array2::zeros((rows, 0)), v: Array2::zeros((0, cols)), rho: 0.0, norm }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.ncols())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.u.dot(&self.v)
    }

    /// `½ Σᵢ (‖U_{:i}‖_c² + ‖V_{i:}‖²)` for the current factors.
    pub fn half_sum(&self) -> f64 {
        variational_bound(&self.u, &self.v, self.norm)
    }

    /// Per-column mass `‖U_{:i}‖_c·‖V_{i:}‖`.
    pub fn column_mass(&self) -> Vec<f64> {
        (0..self.rank())
            .map(|i| (self.norm.sq(self.u.column(i)) * self.v.row(i).dot(&self.v.row(i))).sqrt())
            .collect()
    }

    /// Rescales each column pair so both halves of the bound are equal, which
    /// minimizes the half-sum without changing `UV`.
    pub fn balance(&mut self) {
        for i in 0..self.rank() {
            let cu = self.norm.sq(self.u.column(i)).sqrt();
            let cv = self.v.row(i).dot(&self.v.row(i)).sqrt();
            if cu > 0.0 && cv > 0.0 {
                let s = (cv / cu).sqrt();
                self.u.column_mut(i).mapv_inplace(|x| x * s);
                self.v.row_mut(i).mapv_inplace(|x| x / s);
            }
        }
    }

    /// Drops columns whose mass is below `rel_tol·ρ`.
    pub fn prune(&mut self, rel_tol: f64) {
        let mass = self.column_mass();
        let cut = rel_tol * self.rho.max(0.0);
        let keep: Vec<usize> = (0..self.rank()).filter(|&i| mass[i] >= cut && mass[i] > 0.0).collect();
        if keep.len() < self.rank() {
            self.u = self.u.select(Axis(1), &keep);
            self.v = self.v.select(Axis(0), &keep);
        }
    }
}

/// `½ Σᵢ (‖U_{:i}‖_c² + ‖V_{i:}‖²)`, an upper bound on the gauge of `UV`.
pub fn variational_bound(u: &Array2<f64>, v: &Array2<f64>, norm: ColumnNorm) -> f64 {
    assert_eq!(u.ncols(), v.nrows(), "factor inner dimensions differ");
    (0..u.ncols())
        .map(|i| 0.5 * (norm.sq(u.column(i)) + v.row(i).dot(&v.row(i))))
        .sum()
}

/// Trace norm by dense SVD, for test-scale checks.
pub fn trace_norm(w: &Array2<f64>) -> Result<f64, NumError> {
    Ok(svd_small(w)?.s.sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::gaussian_matrix;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn balanced_unit_factors_are_tight() {
        let u = array![[0.6], [0.8]];
        let v = array![[1.0, 0.0, 0.0]];
        let bound = variational_bound(&u, &v, ColumnNorm::L2);
        assert!((bound - 1.0).abs() < 1e-15);
        assert!((trace_norm(&u.dot(&v)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_factors_give_slack() {
        let u = array![[1.2], [1.6]];
        let v = array![[0.5, 0.0, 0.0]];
        let bound = variational_bound(&u, &v, ColumnNorm::L2);
        assert!((bound - 2.125).abs() < 1e-12);
        assert!((trace_norm(&u.dot(&v)).unwrap() - 1.0).abs() < 1e-12);
        let mut m = FactorModel { u, v, rho: bound, norm: ColumnNorm::L2 };
        m.balance();
        assert!((m.half_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_view_smoothing_bounds_the_max() {
        let split = ViewSplit::new(2, 1, 1.0, 2.0).unwrap();
        let norm = ColumnNorm::TwoView(split);
        let c = array![0.3, 0.4, 1.0];
        let exact = norm.sq(c.view());
        assert!((exact - 0.25).abs() < 1e-15);
        let (smooth, grad) = norm.smoothed_sq(c.view(), 1e-3);
        assert!(smooth >= exact && smooth <= exact + 1e-3 * 2f64.ln() + 1e-15);
        let h = 1e-7;
        for k in 0..3 {
            let mut p = c.clone();
            p[k] += h;
            let mut m = c.clone();
            m[k] -= h;
            let fd = (norm.smoothed_sq(p.view(), 1e-3).0 - norm.smoothed_sq(m.view(), 1e-3).0) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-5, "{k}: {fd} vs {}", grad[k]);
        }
    }

    proptest! {
        #[test]
        fn bound_dominates_trace_norm(seed in 0u64..300) {
            let u = gaussian_matrix(8, 3, seed);
            let v = gaussian_matrix(3, 6, seed + 1000);
            let bound = variational_bound(&u, &v, ColumnNorm::L2);
            prop_assert!(bound - trace_norm(&u.dot(&v)).unwrap() >= -1e-10);
        }
    }
}
