use ndarray::{s, Array1, Array2};

use super::{ColumnNorm, FactorModel, FactorPolar, FactoredLoss, LowRankProblem};
use crate::gcg::ImproveHook;
use crate::numkit::{minimize_newton_cg, minimize_smooth, LinearOperator, SmoothOptions};

/// Which smooth solver runs the local factor descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalMethod {
    #[default]
    QuasiNewton,
    /// Truncated Newton with the loss's Hessian-vector product. Falls back to
    /// quasi-Newton when the loss has no Hessian or the column norm is not `ℓ2`.
    NewtonCg,
}

/// Local descent on `ℓ(UV) + (λ/2) Σᵢ (‖U_{:i}‖_c² + ‖V_{i:}‖²)` from the
/// factor-split iterate.
#[derive(Debug, Clone)]
pub struct LocalImprove {
    pub lambda: f64,
    pub smooth: SmoothOptions,
    pub method: LocalMethod,
    /// Smoothing width for non-differentiable column norms.
    pub tau: f64,
    /// Columns with `‖U_{:i}‖_c‖V_{i:}‖ < prune_tol·ρ` are dropped.
    pub prune_tol: f64,
}

impl LocalImprove {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, smooth: SmoothOptions::default(), method: LocalMethod::QuasiNewton, tau: 1e-3, prune_tol: 1e-10 }
    }

    pub fn with_method(mut self, method: LocalMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_smooth(mut self, smooth: SmoothOptions) -> Self {
        self.smooth = smooth;
        self
    }
}

fn pack(u: &Array2<f64>, v: &Array2<f64>) -> Array1<f64> {
    u.iter().chain(v.iter()).copied().collect()
}

fn unpack(x: &Array1<f64>, n: usize, t: usize, m: usize) -> (Array2<f64>, Array2<f64>) {
    let u = Array2::from_shape_vec((n, t), x.slice(s![..n * t]).to_vec()).expect("packed length");
    let v = Array2::from_shape_vec((t, m), x.slice(s![n * t..]).to_vec()).expect("packed length");
    (u, v)
}

/// Smoothed factor objective with its gradient.
fn factor_objective<L: FactoredLoss>(
    loss: &L,
    norm: ColumnNorm,
    lambda: f64,
    tau: f64,
    u: &Array2<f64>,
    v: &Array2<f64>,
) -> (f64, Array2<f64>, Array2<f64>) {
    let (mut value, mut gu, mut gv) = loss.value_grad_uv(u, v);
    for i in 0..u.ncols() {
        let (sq, g) = norm.smoothed_sq(u.column(i), tau);
        let row = v.row(i);
        value += 0.5 * lambda * (sq + row.dot(&row));
        gu.column_mut(i).scaled_add(0.5 * lambda, &g);
        gv.row_mut(i).scaled_add(lambda, &row);
    }
    (value, gu, gv)
}

/// Hessian of the ℓ2 factor objective applied to `(dU, dV)`.
fn factor_hvp<L: FactoredLoss>(
    loss: &L,
    lambda: f64,
    u: &Array2<f64>,
    v: &Array2<f64>,
    grad: &L::Grad,
    du: &Array2<f64>,
    dv: &Array2<f64>,
) -> Option<(Array2<f64>, Array2<f64>)> {
    let dw = du.dot(v) + u.dot(dv);
    let hdw = loss.hvp_w(u, v, &dw)?;
    let mut hu = hdw.dot(&v.t()) + du * lambda;
    let mut hv = u.t().dot(&hdw) + dv * lambda;
    // Cross terms G dVᵀ and dUᵀ G.
    for k in 0..u.ncols() {
        hu.column_mut(k).scaled_add(1.0, &grad.apply(dv.row(k)));
        hv.row_mut(k).scaled_add(1.0, &grad.apply_t(du.column(k)));
    }
    Some((hu, hv))
}

impl<L, P> ImproveHook<LowRankProblem<L, P>> for LocalImprove
where
    L: FactoredLoss,
    P: FactorPolar<L::Grad>,
{
    fn improve(&mut self, problem: &LowRankProblem<L, P>, state: &FactorModel, rho: f64) -> (FactorModel, f64) {
        let t = state.rank();
        if t == 0 {
            return (state.clone(), rho);
        }
        let loss = problem.factored_loss();
        let norm = problem.norm();
        let (n, m) = state.shape();
        let (lambda, tau) = (self.lambda, self.tau);

        let objective = |x: &Array1<f64>| {
            let (u, v) = unpack(x, n, t, m);
            let (value, gu, gv) = factor_objective(loss, norm, lambda, tau, &u, &v);
            (value, pack(&gu, &gv))
        };
        let x0 = pack(&state.u, &state.v);
        let newton = self.method == LocalMethod::NewtonCg
            && norm == ColumnNorm::L2
            && loss.hvp_w(&state.u, &state.v, &Array2::zeros((n, m))).is_some();
        let result = if newton {
            let hvp = |x: &Array1<f64>, d: &Array1<f64>| {
                let (u, v) = unpack(x, n, t, m);
                let (du, dv) = unpack(d, n, t, m);
                let (_, grad) = loss.grad_w(&u, &v);
                let (hu, hv) = factor_hvp(loss, lambda, &u, &v, &grad, &du, &dv).expect("checked above");
                pack(&hu, &hv)
            };
            minimize_newton_cg(objective, hvp, x0, &self.smooth)
        } else {
            minimize_smooth(objective, x0, &self.smooth)
        };

        let (u, v) = unpack(&result.x, n, t, m);
        let mut model = FactorModel { u, v, rho: 0.0, norm };
        model.balance();
        model.rho = model.half_sum();
        model.prune(self.prune_tol);
        model.rho = model.half_sum();

        let before = loss.value_uv(&state.u, &state.v) + lambda * rho;
        let after = loss.value_uv(&model.u, &model.v) + lambda * model.rho;
        if after <= before {
            let rho = model.rho;
            (model, rho)
        } else {
            (state.clone(), rho)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::{Materialized, TracePolar};
    use crate::losses::SquaredLoss;
    use crate::testutil::gaussian_matrix;
    use ndarray::array;

    fn problem(target: Array2<f64>) -> LowRankProblem<Materialized<SquaredLoss>, TracePolar> {
        LowRankProblem::new(Materialized(SquaredLoss::new(target)), TracePolar::default(), ColumnNorm::L2)
    }

    #[test]
    fn rank_one_exact_fit_without_regularization() {
        let target = array![[1.0], [2.0], [-1.0]].dot(&array![[0.5, 1.0, 2.0, -1.0]]);
        let p = problem(target.clone());
        let u0 = array![[0.8], [1.5], [-0.4]];
        let v0 = array![[0.4, 0.9, 1.4, -0.6]];
        let start = FactorModel { rho: variational_rho(&u0, &v0), u: u0, v: v0, norm: ColumnNorm::L2 };
        let mut hook = LocalImprove::new(0.0).with_smooth(SmoothOptions { max_iter: 200, ..Default::default() });
        let (out, _) = hook.improve(&p, &start, start.rho);
        let resid = crate::numkit::frob_norm(&(out.to_dense() - &target));
        assert!(resid < 1e-6, "{resid}");
    }

    fn variational_rho(u: &Array2<f64>, v: &Array2<f64>) -> f64 {
        crate::lowrank::variational_bound(u, v, ColumnNorm::L2)
    }

    #[test]
    fn never_worse_and_rho_is_half_sum() {
        for seed in 0..10 {
            let p = problem(gaussian_matrix(6, 5, seed));
            let u = gaussian_matrix(6, 3, seed + 100);
            let v = gaussian_matrix(3, 5, seed + 200);
            let rho = variational_rho(&u, &v);
            let start = FactorModel { u, v, rho, norm: ColumnNorm::L2 };
            let lambda = 0.7;
            let (out, rho_out) = LocalImprove::new(lambda).improve(&p, &start, rho);
            let f = |m: &FactorModel, r: f64| p.factored_loss().value_uv(&m.u, &m.v) + lambda * r;
            assert!(f(&out, rho_out) <= f(&start, rho) + 1e-12);
            assert!((rho_out - out.half_sum()).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_point_is_fixed() {
        // ℓ = ½‖W − T‖², λ = 1, T = 3 e₁e₁ᵀ: optimum W = 2 e₁e₁ᵀ with balanced factors √2.
        let mut target = Array2::zeros((3, 2));
        target[[0, 0]] = 3.0;
        let p = problem(target);
        let r = 2f64.sqrt();
        let start = FactorModel { u: array![[r], [0.0], [0.0]], v: array![[r, 0.0]], rho: 2.0, norm: ColumnNorm::L2 };
        let (out, rho) = LocalImprove::new(1.0).improve(&p, &start, 2.0);
        assert!(crate::numkit::frob_norm(&(out.to_dense() - start.to_dense())) < 1e-8);
        assert!((rho - 2.0).abs() < 1e-8);
    }

    #[test]
    fn newton_matches_quasi_newton_on_logistic_toy() {
        use crate::losses::{LabeledDesign, MulticlassLogistic};
        let x = gaussian_matrix(4, 12, 3);
        let labels: Vec<usize> = (0..12).map(|i| (i * 7 + 1) % 3).collect();
        let loss = Materialized(MulticlassLogistic::new(LabeledDesign::new(x, labels, 3).unwrap()));
        let p = LowRankProblem::new(loss, TracePolar::default(), ColumnNorm::L2);
        let u = gaussian_matrix(4, 2, 4) * 0.3;
        let v = gaussian_matrix(2, 3, 5) * 0.3;
        let rho = variational_rho(&u, &v);
        let start = FactorModel { u, v, rho, norm: ColumnNorm::L2 };
        let opts = SmoothOptions { max_iter: 300, grad_tol: 1e-10, ..Default::default() };
        let lambda = 0.05;
        let (qn, r1) = LocalImprove::new(lambda).with_smooth(opts.clone()).improve(&p, &start, rho);
        let (nt, r2) = LocalImprove::new(lambda).with_smooth(opts).with_method(LocalMethod::NewtonCg).improve(&p, &start, rho);
        let f = |m: &FactorModel, r: f64| p.factored_loss().value_uv(&m.u, &m.v) + lambda * r;
        let (a, b) = (f(&qn, r1), f(&nt, r2));
        assert!((a - b).abs() <= 1e-4 * a.abs(), "{a} vs {b}");
    }
}
