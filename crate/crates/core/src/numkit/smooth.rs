use std::collections::VecDeque;

use ndarray::{Array1, Zip};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothOptions {
    pub max_iter: usize,
    /// Projected-gradient infinity norm at which the run is declared converged.
    pub grad_tol: f64,
    pub lower_bounds: Option<Array1<f64>>,
    /// Number of stored correction pairs.
    pub memory: usize,
}

impl Default for SmoothOptions {
    fn default() -> Self {
        Self { max_iter: 20, grad_tol: 1e-8, lower_bounds: None, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothStatus {
    Converged,
    MaxIter,
    /// The line search could not decrease the objective; the best iterate is returned.
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub x: Array1<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: SmoothStatus,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;

fn project(x: &mut Array1<f64>, lb: Option<&Array1<f64>>) {
    if let Some(lb) = lb {
        Zip::from(x).and(lb).for_each(|xi, &l| *xi = xi.max(l));
    }
}

/// Indices allowed to move: interior, or on the bound with a descent direction inward.
fn free_mask(x: &Array1<f64>, g: &Array1<f64>, lb: Option<&Array1<f64>>) -> Vec<bool> {
    match lb {
        None => vec![true; x.len()],
        Some(lb) => (0..x.len()).map(|i| x[i] > lb[i] || g[i] < 0.0).collect(),
    }
}

fn projected_grad_norm(x: &Array1<f64>, g: &Array1<f64>, lb: Option<&Array1<f64>>) -> f64 {
    match lb {
        None => g.iter().fold(0.0, |m, v| m.max(v.abs())),
        Some(lb) => (0..x.len())
            .map(|i| (x[i] - (x[i] - g[i]).max(lb[i])).abs())
            .fold(0.0, f64::max),
    }
}

fn masked(v: &Array1<f64>, free: &[bool]) -> Array1<f64> {
    Array1::from_iter(v.iter().zip(free).map(|(&x, &f)| if f { x } else { 0.0 }))
}

/// Limited-memory quasi-Newton minimization with optional lower bounds.
///
/// Never returns a point worse than `x0` (after projection onto the bounds).
pub fn minimize_smooth<F>(mut f: F, x0: Array1<f64>, opts: &SmoothOptions) -> SmoothResult
where
    F: FnMut(&Array1<f64>) -> (f64, Array1<f64>),
{
    let lb = opts.lower_bounds.as_ref();
    let mut x = x0;
    project(&mut x, lb);
    let (mut fx, mut g) = f(&x);
    let mut pairs: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::with_capacity(opts.memory);

    for it in 0..opts.max_iter {
        if projected_grad_norm(&x, &g, lb) <= opts.grad_tol {
            return SmoothResult { x, value: fx, iterations: it, status: SmoothStatus::Converged };
        }
        let free = free_mask(&x, &g, lb);
        let gf = masked(&g, &free);

        // Two-loop recursion restricted to the free variables.
        let mut q = gf.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let sf = masked(s, &free);
            let a = rho * sf.dot(&q);
            q.scaled_add(-a, &masked(y, &free));
            alphas.push(a);
        }
        let gamma = pairs.back().map_or_else(
            || 1.0 / gf.dot(&gf).sqrt().max(1.0),
            |(s, y, _)| s.dot(y) / y.dot(y),
        );
        let mut d = q * gamma;
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * masked(y, &free).dot(&d);
            d.scaled_add(a - b, &masked(s, &free));
        }
        d.mapv_inplace(|v| -v);
        let mut slope = gf.dot(&d);
        if !(slope < 0.0) {
            pairs.clear();
            d = -&gf / gf.dot(&gf).sqrt().max(1.0);
            slope = gf.dot(&d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = &x + &(&d * step);
            project(&mut trial, lb);
            let (ft, gt) = f(&trial);
            let decrease = g.dot(&(&trial - &x));
            let bound = if lb.is_some() { decrease.min(step * slope) } else { step * slope };
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * bound {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            return SmoothResult { x, value: fx, iterations: it, status: SmoothStatus::LineSearchFailure };
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.dot(&s).sqrt() * y.dot(&y).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let status = if projected_grad_norm(&x, &g, lb) <= opts.grad_tol {
        SmoothStatus::Converged
    } else {
        SmoothStatus::MaxIter
    };
    SmoothResult { x, value: fx, iterations: opts.max_iter, status }
}

/// Truncated Newton (conjugate gradient inner solves) using a Hessian-vector product.
///
/// Lower bounds are not supported here; `opts.lower_bounds` is ignored.
pub fn minimize_newton_cg<F, H>(mut f: F, mut hvp: H, x0: Array1<f64>, opts: &SmoothOptions) -> SmoothResult
where
    F: FnMut(&Array1<f64>) -> (f64, Array1<f64>),
    H: FnMut(&Array1<f64>, &Array1<f64>) -> Array1<f64>,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    for it in 0..opts.max_iter {
        let gnorm = g.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if gnorm <= opts.grad_tol {
            return SmoothResult { x, value: fx, iterations: it, status: SmoothStatus::Converged };
        }
        // CG on H d = −g, stopped at negative curvature or a forcing tolerance.
        let g2 = g.dot(&g);
        let forcing = g2.sqrt().min(0.5) * g2.sqrt();
        let mut d = Array1::zeros(x.len());
        let mut r = -&g;
        let mut p = r.clone();
        let mut rr = g2;
        for _ in 0..(2 * x.len()).max(10) {
            let hp = hvp(&x, &p);
            let curv = p.dot(&hp);
            if curv <= 1e-14 * p.dot(&p) {
                if d.iter().all(|&v| v == 0.0) {
                    d = p.clone();
                }
                break;
            }
            let alpha = rr / curv;
            d.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &hp);
            let rr_new = r.dot(&r);
            if rr_new.sqrt() <= forcing {
                break;
            }
            p = &r + &(&p * (rr_new / rr));
            rr = rr_new;
        }
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            d = -&g;
            slope = -g2;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &(&d * step);
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            return SmoothResult { x, value: fx, iterations: it, status: SmoothStatus::LineSearchFailure };
        };
        x = xn;
        fx = fnew;
        g = gn;
    }
    let gnorm = g.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let status = if gnorm <= opts.grad_tol { SmoothStatus::Converged } else { SmoothStatus::MaxIter };
    SmoothResult { x, value: fx, iterations: opts.max_iter, status }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn rosenbrock(x: &Array1<f64>) -> (f64, Array1<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = array![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn quadratic_recovers_center() {
        let c = array![1.0, -2.0, 3.5];
        let f = |x: &Array1<f64>| {
            let d = x - &c;
            (0.5 * d.dot(&d), d)
        };
        let r = minimize_smooth(f, array![10.0, 10.0, -4.0], &SmoothOptions::default());
        assert!(r.x.iter().zip(c.iter()).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let opts = SmoothOptions { max_iter: 200, grad_tol: 1e-10, ..Default::default() };
        let r = minimize_smooth(rosenbrock, array![-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
        let (_, g) = rosenbrock(&r.x);
        assert!(g.dot(&g).sqrt() < 1e-4);
    }

    #[test]
    fn active_lower_bound() {
        let opts = SmoothOptions { lower_bounds: Some(array![2.0]), ..Default::default() };
        let f = |x: &Array1<f64>| (0.5 * (x[0] - 1.0).powi(2), array![x[0] - 1.0]);
        let r = minimize_smooth(f, array![3.0], &opts);
        assert_eq!(r.x[0], 2.0);
        assert_eq!(r.status, SmoothStatus::Converged);
    }

    #[test]
    fn newton_cg_on_rosenbrock() {
        let hvp = |x: &Array1<f64>, p: &Array1<f64>| {
            let (a, b) = (x[0], x[1]);
            let h11 = 2.0 - 400.0 * (b - a * a) + 800.0 * a * a;
            let h12 = -400.0 * a;
            array![h11 * p[0] + h12 * p[1], h12 * p[0] + 200.0 * p[1]]
        };
        let opts = SmoothOptions { max_iter: 200, grad_tol: 1e-10, ..Default::default() };
        let r = minimize_newton_cg(rosenbrock, hvp, array![-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn never_worse_than_start(
            x0 in prop::collection::vec(-3.0f64..3.0, 2),
            iters in 1usize..30,
        ) {
            let start = Array1::from(x0);
            let (f0, _) = rosenbrock(&start);
            let opts = SmoothOptions { max_iter: iters, ..Default::default() };
            let r = minimize_smooth(rosenbrock, start, &opts);
            prop_assert!(r.value <= f0);
            prop_assert_eq!(rosenbrock(&r.x).0, r.value);
        }

        #[test]
        fn bounds_respected_exactly(
            c in prop::collection::vec(-2.0f64..2.0, 4),
            lb in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let c = Array1::from(c);
            let lb = Array1::from(lb);
            let f = |x: &Array1<f64>| { let d = x - &c; (0.5 * d.dot(&d), d) };
            let opts = SmoothOptions { max_iter: 50, lower_bounds: Some(lb.clone()), ..Default::default() };
            let r = minimize_smooth(f, lb.mapv(|v| v + 1.0), &opts);
            for i in 0..4 {
                prop_assert!(r.x[i] >= lb[i]);
                prop_assert!((r.x[i] - c[i].max(lb[i])).abs() < 1e-7);
            }
        }
    }
}
