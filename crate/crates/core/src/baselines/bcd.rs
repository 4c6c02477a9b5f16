use std::time::Instant;

use ndarray::{s, Array2};

use crate::gcg::{IterRecord, SolverTrace};
use crate::losses::{SmoothLoss, SmoothedL1, SquaredLoss};
use crate::multiview::{stack_views, MultiviewError, ViewLoss, ViewSplit};
use crate::numkit::frob_dot;
use crate::random::{rng_from_seed, sphere_vector};

#[derive(Debug, Clone, PartialEq)]
pub struct BcdOptions {
    /// Number of dictionary columns.
    pub rank: usize,
    pub outer_iters: usize,
    /// Proximal-gradient steps per block update.
    pub inner_iters: usize,
    /// Stop when one sweep moves the objective by less than this fraction.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self { rank: 5, outer_iters: 200, inner_iters: 20, rel_tol: 1e-9, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct BcdOutput {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub h: Array2<f64>,
    pub objective: f64,
    pub trace: SolverTrace,
}

/// Monotone accelerated proximal gradient on one block with backtracking.
struct BlockStep<'a> {
    value_grad: &'a dyn Fn(&Array2<f64>) -> (f64, Array2<f64>),
    value: &'a dyn Fn(&Array2<f64>) -> f64,
    prox: &'a dyn Fn(&Array2<f64>, f64) -> Array2<f64>,
    penalty: &'a dyn Fn(&Array2<f64>) -> f64,
}

impl BlockStep<'_> {
    fn run(&self, x0: Array2<f64>, lip: &mut f64, iters: usize) -> Array2<f64> {
        let mut x = x0;
        let mut fx = (self.value)(&x) + (self.penalty)(&x);
        let mut y = x.clone();
        let mut t = 1.0f64;
        // Let the curvature estimate shrink between block visits.
        *lip = (*lip * 0.5).max(1e-12);
        for _ in 0..iters {
            let (fy, gy) = (self.value_grad)(&y);
            let z = loop {
                let z = (self.prox)(&(&y - &(&gy / *lip)), 1.0 / *lip);
                let d = &z - &y;
                if (self.value)(&z) <= fy + frob_dot(&gy, &d) + 0.5 * *lip * frob_dot(&d, &d) + 1e-12 * fy.abs().max(1.0) || *lip > 1e300 {
                    break z;
                }
                *lip *= 2.0;
            };
            let fz = (self.value)(&z) + (self.penalty)(&z);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let x_prev = x.clone();
            if fz <= fx {
                x = z.clone();
                fx = fz;
            }
            y = &x + &((&z - &x) * (t / t_next)) + &((&x - &x_prev) * ((t - 1.0) / t_next));
            t = t_next;
        }
        x
    }
}

fn row_norms_sum(h: &Array2<f64>) -> f64 {
    h.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum()
}

fn shrink_rows(h: &Array2<f64>, tau: f64) -> Array2<f64> {
    let mut out = h.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        let scale = if n > tau { 1.0 - tau / n } else { 0.0 };
        row *= scale;
    }
    out
}

fn project_columns(u: &Array2<f64>, split: &ViewSplit) -> Array2<f64> {
    let mut out = u.clone();
    for mut col in out.columns_mut() {
        for (range, radius) in [(s![..split.n1], split.beta), (s![split.n1..], split.gamma)] {
            let mut block = col.slice_mut(range);
            let n = block.dot(&block).sqrt();
            if n > radius {
                block *= radius / n;
            }
        }
    }
    out
}

/// Fixed-rank alternating minimization of `ℓ([X; Y], [A; B]H) + λ Σᵢ ‖H_{i:}‖`
/// subject to `‖A_{:i}‖ ≤ β`, `‖B_{:i}‖ ≤ γ`, from a seeded random dictionary.
pub fn solve_bcd_multiview(
    x: &Array2<f64>,
    y: &Array2<f64>,
    lambda: f64,
    split: &ViewSplit,
    loss: ViewLoss,
    opts: &BcdOptions,
) -> Result<BcdOutput, MultiviewError> {
    let z = stack_views(x, y, split)?;
    let loss: Box<dyn SmoothLoss> = match loss {
        ViewLoss::SmoothedL1 => Box::new(SmoothedL1::with_default_width(z)),
        ViewLoss::Squared => Box::new(SquaredLoss::new(z)),
    };
    let (rows, m) = loss.shape();
    let k = opts.rank;
    let mut rng = rng_from_seed(opts.seed);
    let mut u = Array2::zeros((rows, k));
    for i in 0..k {
        u.slice_mut(s![..split.n1, i]).assign(&sphere_vector(split.n1, split.beta, &mut rng));
        u.slice_mut(s![split.n1.., i]).assign(&sphere_vector(split.n2, split.gamma, &mut rng));
    }
    let mut h = Array2::zeros((k, m));
    let start = Instant::now();
    let objective = |u: &Array2<f64>, h: &Array2<f64>| loss.value(&u.dot(h)) + lambda * row_norms_sum(h);
    let mut f = objective(&u, &h);
    let mut trace = SolverTrace::new();
    let push = |trace: &mut SolverTrace, iter: usize, f: f64, h: &Array2<f64>| {
        trace.push(IterRecord {
            iter,
            time_s: start.elapsed().as_secs_f64(),
            objective: f,
            rho: row_norms_sum(h),
            eta: 0.0,
            theta: 0.0,
            atoms: h.rows().into_iter().filter(|r| r.iter().any(|v| *v != 0.0)).count(),
            gap: None,
            test_metric: None,
        })
    };
    push(&mut trace, 0, f, &h);
    let (mut lip_h, mut lip_u) = (1.0, 1.0);

    for iter in 1..=opts.outer_iters {
        {
            let uu = u.clone();
            let value_grad = |h: &Array2<f64>| {
                let (v, g) = loss.value_grad(&uu.dot(h));
                (v, uu.t().dot(&g))
            };
            let value = |h: &Array2<f64>| loss.value(&uu.dot(h));
            let prox = |h: &Array2<f64>, step: f64| shrink_rows(h, lambda * step);
            let penalty = |h: &Array2<f64>| lambda * row_norms_sum(h);
            h = BlockStep { value_grad: &value_grad, value: &value, prox: &prox, penalty: &penalty }.run(h, &mut lip_h, opts.inner_iters);
        }
        {
            let hh = h.clone();
            let value_grad = |u: &Array2<f64>| {
                let (v, g) = loss.value_grad(&u.dot(&hh));
                (v, g.dot(&hh.t()))
            };
            let value = |u: &Array2<f64>| loss.value(&u.dot(&hh));
            let prox = |u: &Array2<f64>, _: f64| project_columns(u, split);
            let penalty = |_: &Array2<f64>| 0.0;
            u = BlockStep { value_grad: &value_grad, value: &value, prox: &prox, penalty: &penalty }.run(u, &mut lip_u, opts.inner_iters);
        }
        let f_next = objective(&u, &h);
        push(&mut trace, iter, f_next, &h);
        let moved = (f - f_next).abs();
        f = f_next;
        if moved <= opts.rel_tol * f.abs() {
            break;
        }
    }
    Ok(BcdOutput { a: u.slice(s![..split.n1, ..]).to_owned(), b: u.slice(s![split.n1.., ..]).to_owned(), h, objective: f, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::gaussian_matrix;

    #[test]
    fn objective_is_monotone_and_columns_feasible() {
        let split = ViewSplit::new(6, 5, 1.0, 2.0).unwrap();
        let (x, y) = (gaussian_matrix(6, 8, 1), gaussian_matrix(5, 8, 2));
        let out = solve_bcd_multiview(&x, &y, 0.5, &split, ViewLoss::SmoothedL1, &BcdOptions { rank: 3, outer_iters: 40, ..Default::default() }).unwrap();
        let objs = out.trace.objectives();
        assert!(objs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{objs:?}");
        for i in 0..3 {
            assert!(out.a.column(i).dot(&out.a.column(i)).sqrt() <= 1.0 + 1e-12);
            assert!(out.b.column(i).dot(&out.b.column(i)).sqrt() <= 2.0 + 1e-12);
        }
        assert!(objs[objs.len() - 1] < objs[0]);
    }
}
