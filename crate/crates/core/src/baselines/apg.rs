use std::time::Instant;

use ndarray::Array2;

use super::ProxOperator;
use crate::gcg::{gap_from_parts, HSpec, IterRecord, SolverTrace};
use crate::losses::SmoothLoss;
use crate::numkit::{frob_dot, frob_norm};

#[derive(Debug, Clone, PartialEq)]
pub struct ApgOptions {
    pub max_iters: usize,
    /// Stop once the gradient mapping `L(y − prox(y − ∇ℓ(y)/L))` is this small in Frobenius norm.
    pub tol: f64,
    /// Stop once the duality gap is at most this; `None` skips the check.
    pub gap_tol: Option<f64>,
    pub track_gap: bool,
    pub gap_feasibility_slack: f64,
    pub time_budget_s: f64,
}

impl Default for ApgOptions {
    fn default() -> Self {
        Self { max_iters: 1000, tol: 1e-9, gap_tol: None, track_gap: true, gap_feasibility_slack: 1e-6, time_budget_s: 600.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ApgOutput {
    pub w: Array2<f64>,
    pub objective: f64,
    pub trace: SolverTrace,
    /// Curvature estimate after backtracking.
    pub lipschitz: f64,
    pub converged: bool,
}

/// Monotone accelerated proximal gradient for `ℓ(w) + λ r(w)` from `w0`,
/// with backtracking that doubles `L` on sufficient-decrease failure.
pub fn run_apg<L: SmoothLoss, P: ProxOperator>(loss: &L, prox: P, lambda: f64, l0: f64, w0: &Array2<f64>, opts: &ApgOptions) -> ApgOutput {
    run_apg_tracked(loss, prox, lambda, l0, w0, opts, None)
}

/// [`run_apg`] recording `metric` in the trace.
pub fn run_apg_tracked<L: SmoothLoss, P: ProxOperator>(
    loss: &L,
    prox: P,
    lambda: f64,
    l0: f64,
    w0: &Array2<f64>,
    opts: &ApgOptions,
    metric: Option<&dyn Fn(&Array2<f64>) -> f64>,
) -> ApgOutput {
    assert!(l0 > 0.0, "initial curvature must be positive");
    let start = Instant::now();
    let objective = |w: &Array2<f64>, value: f64| value + lambda * prox.norm(w);
    let gap_at = |w: &Array2<f64>, grad: &Array2<f64>| {
        gap_from_parts(frob_dot(w, grad), prox.dual_norm(grad), prox.norm(w), HSpec::Linear { lambda }, opts.gap_feasibility_slack)
    };

    let mut x = w0.clone();
    let (fx_loss, mut gx) = loss.value_grad(&x);
    let mut fx = objective(&x, fx_loss);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = l0;
    let mut trace = SolverTrace::new();
    let record = |iter: usize, x: &Array2<f64>, fx: f64, gap: Option<f64>, lip: f64| IterRecord {
        iter,
        time_s: start.elapsed().as_secs_f64(),
        objective: fx,
        rho: prox.norm(x),
        eta: 0.0,
        theta: 1.0 / lip,
        atoms: prox.support_size(x),
        gap,
        test_metric: metric.map(|m| m(x)),
    };
    let track = opts.track_gap || opts.gap_tol.is_some();
    let g0 = track.then(|| gap_at(&x, &gx));
    trace.push(record(0, &x, fx, g0, lip));
    let mut converged = false;

    for k in 1..=opts.max_iters {
        if start.elapsed().as_secs_f64() >= opts.time_budget_s {
            break;
        }
        let (fy, gy) = loss.value_grad(&y);
        let (z, fz_loss) = loop {
            let z = prox.apply(&(&y - &(&gy * (1.0 / lip))), lambda / lip);
            let d = &z - &y;
            let fz = loss.value(&z);
            let model = fy + frob_dot(&gy, &d) + 0.5 * lip * frob_dot(&d, &d);
            if fz <= model + 1e-12 * fy.abs().max(1.0) || lip > 1e300 {
                break (z, fz);
            }
            lip *= 2.0;
        };
        let grad_map = frob_norm(&(&y - &z)) * lip;
        let fz = objective(&z, fz_loss);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
            gx = loss.grad(&x);
        }
        // Monotone extrapolation: y = x + (t/t')(z − x) + ((t − 1)/t')(x − x_prev).
        y = &x + &((&z - &x) * (t / t_next)) + &((&x - &x_prev) * ((t - 1.0) / t_next));
        t = t_next;

        let gap = track.then(|| gap_at(&x, &gx));
        trace.push(record(k, &x, fx, gap, lip));
        let gap_done = matches!((gap, opts.gap_tol), (Some(g), Some(tol)) if g <= tol);
        if grad_map <= opts.tol || gap_done {
            converged = true;
            break;
        }
    }
    ApgOutput { w: x, objective: fx, trace, lipschitz: lip, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{L1Prox, TraceProx};
    use crate::losses::{MaskedObservations, MaskedSquared, SquaredLoss};
    use crate::numkit::TripletMatrix;
    use crate::testutil::gaussian_matrix;
    use ndarray::array;

    #[test]
    fn scalar_lasso_closed_form() {
        let loss = SquaredLoss::new(array![[2.0]]);
        let out = run_apg(&loss, L1Prox, 1.0, 1.0, &array![[0.0]], &ApgOptions { max_iters: 100, tol: 1e-12, ..Default::default() });
        assert!((out.w[[0, 0]] - 1.0).abs() < 1e-10);
        assert!(out.trace.len() <= 101);
    }

    #[test]
    fn dominating_lambda_keeps_zero() {
        let loss = SquaredLoss::new(gaussian_matrix(4, 3, 2));
        let out = run_apg(&loss, TraceProx, 100.0, 1.0, &Array2::zeros((4, 3)), &ApgOptions::default());
        assert!(frob_norm(&out.w) == 0.0);
    }

    #[test]
    fn matrix_completion_objectives_are_monotone_and_gap_closes() {
        let x = gaussian_matrix(12, 10, 3).dot(&gaussian_matrix(10, 10, 4)) * 0.3;
        let triples = x.indexed_iter().filter(|((i, j), _)| (i + 2 * j) % 3 != 0).map(|((i, j), &v)| (i, j, v)).collect();
        let obs = MaskedObservations::new(TripletMatrix::new(12, 10, triples).unwrap(), None).unwrap();
        let loss = MaskedSquared::new(&obs);
        let opts = ApgOptions { max_iters: 5000, tol: 0.0, gap_tol: Some(1e-10), ..Default::default() };
        let out = run_apg(&loss, TraceProx, 0.8, 0.5, &Array2::zeros((12, 10)), &opts);
        assert!(out.converged);
        let objs = out.trace.objectives();
        assert!(objs.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.trace.last().unwrap().gap.unwrap() <= 1e-10);
    }
}
