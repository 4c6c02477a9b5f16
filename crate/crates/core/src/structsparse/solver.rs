use std::time::Instant;

use ndarray::{Array1, Array2};

use super::polar::{BruteForcePolar, SmoothedPolar, SubsetOracle, SupportAtom, WarmPolar};
use super::{GroupStructure, QExponent, StructError};
use crate::gcg::{gap_from_parts, HSpec, IterRecord, SolverOptions, SolverTrace, StopReason};
use crate::losses::SmoothLoss;
use crate::numkit::{minimize_smooth, SmoothOptions};

const STALL_WINDOW: usize = 5;
/// Corrective weights below this are dropped with their atoms.
const DROP_WEIGHT: f64 = 1e-12;

/// Nonnegative combination of support atoms; `ρ = Σσ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicModel {
    pub atoms: Vec<SupportAtom>,
    pub weights: Vec<f64>,
}

impl AtomicModel {
    pub fn rho(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Σ σ_τ a_τ` as a flat vector of length `n`.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        with_weights(&self.atoms, &self.weights, n)
    }

    fn prune(&mut self) {
        let (atoms, weights) = self.atoms.drain(..).zip(self.weights.drain(..)).filter(|(_, w)| *w >= DROP_WEIGHT).unzip();
        self.atoms = atoms;
        self.weights = weights;
    }
}

fn with_weights(atoms: &[SupportAtom], weights: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (a, &w) in atoms.iter().zip(weights) {
        a.add_to(w, &mut out);
    }
    out
}

fn as_matrix(flat: Vec<f64>, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_vec(shape, flat).expect("flat length matches the loss shape")
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

/// Re-optimizes the weights of fixed atoms: `min ℓ(Σ σ_τ a_τ) + λΣσ_τ` over `σ ≥ 0`.
/// Never returns a worse objective than the incoming weights.
pub fn totally_corrective<L: SmoothLoss>(model: &AtomicModel, loss: &L, lambda: f64, opts: &SmoothOptions) -> AtomicModel {
    if model.is_empty() {
        return model.clone();
    }
    let shape = loss.shape();
    let n = shape.0 * shape.1;
    let objective = |s: &Array1<f64>| {
        let w = as_matrix(with_weights(&model.atoms, s.as_slice().expect("contiguous"), n), shape);
        let (value, grad) = loss.value_grad(&w);
        let g = flat(&grad);
        let grad_s = Array1::from_iter(model.atoms.iter().map(|a| a.dot(&g) + lambda));
        (value + lambda * s.sum(), grad_s)
    };
    let opts = SmoothOptions { lower_bounds: Some(Array1::zeros(model.len())), ..opts.clone() };
    let start = Array1::from(model.weights.clone());
    let before = objective(&start).0;
    let result = minimize_smooth(objective, start, &opts);
    let mut out = model.clone();
    if result.value <= before {
        out.weights = result.x.to_vec();
    }
    out.prune();
    out
}

/// Which support oracle drives the polar step.
#[derive(Debug, Clone, PartialEq)]
pub enum StructuredOracle {
    Smoothed(SmoothedPolar),
    BruteForce,
}

impl Default for StructuredOracle {
    fn default() -> Self {
        Self::Smoothed(SmoothedPolar { relative: true, ..Default::default() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOptions {
    /// Budgets and stopping; `improve` toggles the totally-corrective step. The step rule is unused.
    pub solver: SolverOptions,
    pub oracle: StructuredOracle,
    pub corrective: SmoothOptions,
}

impl Default for StructuredOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            oracle: StructuredOracle::default(),
            corrective: SmoothOptions { max_iter: 200, grad_tol: 1e-10, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructuredOutput {
    pub model: AtomicModel,
    /// The iterate, shaped like the loss's argument.
    pub w: Array2<f64>,
    pub rho: f64,
    pub trace: SolverTrace,
    pub stop: StopReason,
}

struct Polar {
    atom: SupportAtom,
    /// Upper bound on `κ°(−∇ℓ)`.
    upper: f64,
}

fn polar_step(oracle: &mut dyn SubsetOracle, neg_grad: &[f64], gs: &GroupStructure, q: QExponent) -> Result<Polar, StructError> {
    let (support, _, upper) = oracle.select(neg_grad, gs, q)?;
    Ok(Polar { atom: SupportAtom::for_direction(neg_grad, support, gs, q), upper: q.root(upper) })
}

/// `min_{α,β≥0} ℓ(αw + βa) + λ(αρ + β)`, started from `(1, 0)`.
fn conic_search<L: SmoothLoss>(loss: &L, w: &Array2<f64>, rho: f64, atom: &Array2<f64>, lambda: f64) -> (f64, f64) {
    let objective = |x: &Array1<f64>| {
        let point = w * x[0] + atom * x[1];
        let (value, grad) = loss.value_grad(&point);
        let ga = (&grad * w).sum() + lambda * rho;
        let gb = (&grad * atom).sum() + lambda;
        (value + lambda * (x[0] * rho + x[1]), Array1::from(vec![ga, gb]))
    };
    let opts = SmoothOptions { max_iter: 100, grad_tol: 1e-12, lower_bounds: Some(Array1::zeros(2)), ..Default::default() };
    let r = minimize_smooth(objective, Array1::from(vec![1.0, 0.0]), &opts);
    (r.x[0], r.x[1])
}

/// Conditional gradient with a 2-D conic search and totally-corrective
/// reweighting for `ℓ(w) + λκ(w)` under a subset-cost gauge. Variables are
/// the entries of the loss's argument in row-major order.
pub fn solve_structured_gcg<L: SmoothLoss>(
    loss: &L,
    gs: &GroupStructure,
    lambda: f64,
    q: QExponent,
    opts: &StructuredOptions,
) -> Result<StructuredOutput, StructError> {
    let shape = loss.shape();
    let n = shape.0 * shape.1;
    assert_eq!(gs.n(), n, "group structure must index every entry of the argument");
    assert!(lambda > 0.0, "lambda must be positive");
    let h = HSpec::Linear { lambda };
    let start = Instant::now();
    let mut oracle: Box<dyn SubsetOracle> = match &opts.oracle {
        StructuredOracle::Smoothed(p) => Box::new(WarmPolar::new(p.clone())),
        StructuredOracle::BruteForce => Box::new(BruteForcePolar),
    };
    let mut model = AtomicModel::default();
    let mut trace = SolverTrace::new();
    let mut w = Array2::zeros(shape);
    let (value, mut grad) = loss.value_grad(&w);
    let mut objective = value;
    trace.push(IterRecord { iter: 0, time_s: start.elapsed().as_secs_f64(), objective, rho: 0.0, eta: 0.0, theta: 0.0, atoms: 0, gap: None, test_metric: None });

    let mut stop = StopReason::MaxIters;
    for t in 1..=opts.solver.max_iters {
        if start.elapsed().as_secs_f64() >= opts.solver.time_budget_s {
            stop = StopReason::TimeBudget;
            break;
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let polar = polar_step(oracle.as_mut(), &neg, gs, q)?;
        let rho = model.rho();
        if opts.solver.track_gap {
            let wg = (&w * &grad).sum();
            trace.last_mut().expect("nonempty").gap = Some(gap_from_parts(wg, polar.upper, rho, h, opts.solver.gap_feasibility_slack));
        }

        let atom_dense = as_matrix(with_weights(std::slice::from_ref(&polar.atom), &[1.0], n), shape);
        let (alpha, beta) = conic_search(loss, &w, rho, &atom_dense, lambda);
        let mut next = model.clone();
        next.weights.iter_mut().for_each(|s| *s *= alpha);
        match next.atoms.iter().position(|a| *a == polar.atom) {
            Some(k) => next.weights[k] += beta,
            None => {
                next.atoms.push(polar.atom);
                next.weights.push(beta);
            }
        }
        next.prune();
        if opts.solver.improve {
            next = totally_corrective(&next, loss, lambda, &opts.corrective);
        }

        let w_next = as_matrix(next.dense(n), shape);
        let (v_next, g_next) = loss.value_grad(&w_next);
        let f_next = v_next + lambda * next.rho();
        if f_next <= objective {
            model = next;
            w = w_next;
            grad = g_next;
            objective = f_next;
        }
        trace.push(IterRecord {
            iter: t,
            time_s: start.elapsed().as_secs_f64(),
            objective,
            rho: model.rho(),
            eta: 1.0 - alpha,
            theta: beta,
            atoms: model.len(),
            gap: None,
            test_metric: None,
        });
        let recs = trace.records();
        if opts.solver.rel_obj_tol > 0.0 && recs.len() > STALL_WINDOW {
            let past = recs[recs.len() - 1 - STALL_WINDOW].objective;
            if (past - objective).abs() <= opts.solver.rel_obj_tol * objective.abs() {
                stop = StopReason::ObjectiveStalled;
                break;
            }
        }
    }
    if opts.solver.track_gap {
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let polar = polar_step(oracle.as_mut(), &neg, gs, q)?;
        let wg = (&w * &grad).sum();
        trace.last_mut().expect("nonempty").gap = Some(gap_from_parts(wg, polar.upper, model.rho(), h, opts.solver.gap_feasibility_slack));
    }
    let rho = model.rho();
    Ok(StructuredOutput { model, w, rho, trace, stop })
}
