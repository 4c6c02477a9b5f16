use std::fmt;
use std::time::Instant;

use super::dense::gap_from_parts;
use super::steps::{joint_search, minimize_quadratic, step_adaptive, step_open_loop, Quad2, Region, Segment};
use super::trace::{IterRecord, SolverTrace};
use super::{GcgError, HSpec, PolarAtom, SolverOptions, StepRule};

/// What the driver needs from a problem: loss evaluation, a polar oracle,
/// inner products between iterates, atoms and gradients, and the update.
pub trait GcgProblem {
    type State: Clone;
    type Atom;
    type Grad;

    fn zero(&self) -> Self::State;
    fn loss(&self, s: &Self::State) -> f64;
    fn gradient(&self, s: &Self::State) -> (f64, Self::Grad);
    /// Atom approximately maximizing `⟨a, −grad⟩`.
    fn polar(&mut self, grad: &Self::Grad) -> Result<PolarAtom<Self::Atom>, GcgError>;

    fn atom_dot_grad(&self, a: &Self::Atom, grad: &Self::Grad) -> f64;
    fn state_dot_grad(&self, s: &Self::State, grad: &Self::Grad) -> f64;
    fn atom_dot_state(&self, a: &Self::Atom, s: &Self::State) -> f64;
    fn atom_sq_norm(&self, a: &Self::Atom) -> f64;
    fn state_sq_norm(&self, s: &Self::State) -> f64;

    /// The loss along `(η, θ) ↦ ℓ((1−η)w + θa)`, given the value and gradient at `w`.
    fn segment<'a>(&'a self, s: &'a Self::State, value: f64, grad: &Self::Grad, a: &'a Self::Atom) -> Segment<'a>;
    /// `(1−η)w + θa`
    fn step(&self, s: &Self::State, a: &Self::Atom, eta: f64, theta: f64) -> Self::State;
    fn atom_count(&self, s: &Self::State) -> usize;
    fn lipschitz(&self) -> Option<f64>;

    fn test_metric(&self, _s: &Self::State) -> Option<f64> {
        None
    }
}

/// Local improvement applied after each conditional-gradient step.
///
/// Receives `(w̃, ρ̃)` and returns a candidate `(w', ρ')` with `ρ' ≥ κ(w')`.
/// The driver accepts it only when the objective does not increase.
pub trait ImproveHook<P: GcgProblem> {
    fn improve(&mut self, problem: &P, state: &P::State, rho: f64) -> (P::State, f64);
}

/// The identity hook.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoImprove;

impl<P: GcgProblem> ImproveHook<P> for NoImprove {
    fn improve(&mut self, _problem: &P, state: &P::State, rho: f64) -> (P::State, f64) {
        (state.clone(), rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    TimeBudget,
    ObjectiveStalled,
}

#[derive(Debug, Clone)]
pub struct GcgOutput<S> {
    pub state: S,
    pub rho: f64,
    pub trace: SolverTrace,
    pub stop: StopReason,
    /// Number of improve results rejected for increasing the objective.
    pub rejected_improvements: usize,
}

/// An oracle failure together with the last accepted iterate.
#[derive(Debug, Clone)]
pub struct GcgFailure<S> {
    pub error: GcgError,
    pub last: GcgOutput<S>,
}

impl<S> fmt::Display for GcgFailure<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} iterations)", self.error, self.last.trace.len().saturating_sub(1))
    }
}

impl<S: fmt::Debug> std::error::Error for GcgFailure<S> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

const STALL_WINDOW: usize = 5;

fn objective(loss: f64, rho: f64, h: HSpec) -> f64 {
    loss + h.eval(rho)
}

/// Chooses `(η, θ)` for the atom `a` at iterate `w` according to the step rule.
#[allow(clippy::too_many_arguments)]
fn choose_step<P: GcgProblem>(
    problem: &P,
    rule: StepRule,
    t: usize,
    h: HSpec,
    w: &P::State,
    rho: f64,
    value: f64,
    grad: &P::Grad,
    atom: &P::Atom,
) -> Result<(f64, f64), GcgError> {
    match rule {
        StepRule::JointLineSearch => Ok(joint_search(&problem.segment(w, value, grad, atom), rho, h)),
        StepRule::OpenLoop => {
            let l = problem.lipschitz().ok_or(GcgError::MissingLipschitz)?;
            let eta = step_open_loop(t);
            let a_sq = problem.atom_sq_norm(atom);
            if a_sq == 0.0 {
                return Ok((eta, 0.0));
            }
            let lin = l * eta * problem.atom_dot_state(atom, w) - problem.atom_dot_grad(atom, grad);
            let theta = match h {
                HSpec::Linear { lambda } => ((lin - lambda) / (l * a_sq)).max(0.0),
                HSpec::Indicator { zeta } => (lin / (l * a_sq)).clamp(0.0, eta * zeta),
            };
            Ok((eta, theta))
        }
        StepRule::Adaptive => {
            let l = problem.lipschitz().ok_or(GcgError::MissingLipschitz)?;
            let w_g = problem.state_dot_grad(w, grad);
            let a_g = problem.atom_dot_grad(atom, grad);
            let w_a = problem.atom_dot_state(atom, w);
            let a_sq = problem.atom_sq_norm(atom);
            let w_sq = problem.state_sq_norm(w);
            match h {
                HSpec::Linear { lambda } => {
                    let model = Quad2::from_taylor(value, w_g, a_g, l * w_sq, l * w_a, l * a_sq).plus_linear_h(rho, lambda);
                    Ok(minimize_quadratic(&model, Region::Box))
                }
                HSpec::Indicator { zeta } => {
                    let gap = w_g - zeta * a_g;
                    let dist_sq = (w_sq - 2.0 * zeta * w_a + zeta * zeta * a_sq).max(0.0);
                    let eta = step_adaptive(gap.max(0.0), l, dist_sq);
                    Ok((eta, eta * zeta))
                }
            }
        }
    }
}

/// Runs the conditional-gradient loop from `w = 0`, `ρ = 0`.
pub fn run_gcg<P, I>(
    problem: &mut P,
    h: HSpec,
    improve: &mut I,
    opts: &SolverOptions,
) -> Result<GcgOutput<P::State>, GcgFailure<P::State>>
where
    P: GcgProblem,
    I: ImproveHook<P> + ?Sized,
{
    let start = Instant::now();
    let mut w = problem.zero();
    let mut rho = 0.0;
    let mut trace = SolverTrace::new();
    let mut rejected = 0;

    let fail = |error: GcgError, w: P::State, rho: f64, trace: SolverTrace, rejected: usize| GcgFailure {
        error,
        last: GcgOutput { state: w, rho, trace, stop: StopReason::MaxIters, rejected_improvements: rejected },
    };
    if let Err(e) = opts.validate() {
        return Err(fail(e, w, rho, trace, rejected));
    }

    let f0 = objective(problem.loss(&w), rho, h);
    trace.push(IterRecord {
        iter: 0,
        time_s: start.elapsed().as_secs_f64(),
        objective: f0,
        rho,
        eta: 0.0,
        theta: 0.0,
        atoms: problem.atom_count(&w),
        gap: None,
        test_metric: problem.test_metric(&w),
    });

    let mut stop = StopReason::MaxIters;
    for t in 0..opts.max_iters {
        let (value, grad) = problem.gradient(&w);
        let polar = match problem.polar(&grad) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, w, rho, trace, rejected)),
        };
        if opts.track_gap {
            let gap = gap_from_parts(problem.state_dot_grad(&w, &grad), polar.polar_upper(), rho, h, opts.gap_feasibility_slack);
            if let Some(last) = trace.last_mut() {
                last.gap = Some(gap);
            }
        }

        let (eta, theta) = if polar.value > 0.0 {
            match choose_step(problem, opts.step_rule, t, h, &w, rho, value, &grad, &polar.atom) {
                Ok(step) => step,
                Err(e) => return Err(fail(e, w, rho, trace, rejected)),
            }
        } else {
            // Zero gradient: no atom to add, only the improve hook may move.
            (0.0, 0.0)
        };
        let w_tilde = problem.step(&w, &polar.atom, eta, theta);
        let rho_tilde = (1.0 - eta) * rho + theta;
        let f_tilde = objective(problem.loss(&w_tilde), rho_tilde, h);

        let (w_next, rho_next, f_next) = if opts.improve {
            let (w_imp, rho_imp) = improve.improve(problem, &w_tilde, rho_tilde);
            let f_imp = objective(problem.loss(&w_imp), rho_imp, h);
            if f_imp <= f_tilde + 1e-12 * f_tilde.abs().max(1.0) {
                (w_imp, rho_imp, f_imp)
            } else {
                rejected += 1;
                (w_tilde, rho_tilde, f_tilde)
            }
        } else {
            (w_tilde, rho_tilde, f_tilde)
        };
        w = w_next;
        rho = rho_next;

        trace.push(IterRecord {
            iter: t + 1,
            time_s: start.elapsed().as_secs_f64(),
            objective: f_next,
            rho,
            eta,
            theta,
            atoms: problem.atom_count(&w),
            gap: None,
            test_metric: problem.test_metric(&w),
        });

        if start.elapsed().as_secs_f64() > opts.time_budget_s {
            stop = StopReason::TimeBudget;
            break;
        }
        let objs = trace.records();
        if opts.rel_obj_tol > 0.0 && objs.len() > STALL_WINDOW {
            let past = objs[objs.len() - 1 - STALL_WINDOW].objective;
            if (past - f_next).abs() <= opts.rel_obj_tol * f_next.abs() {
                stop = StopReason::ObjectiveStalled;
                break;
            }
        }
    }

    if opts.track_gap {
        let (_, grad) = problem.gradient(&w);
        match problem.polar(&grad) {
            Ok(polar) => {
                let gap = gap_from_parts(problem.state_dot_grad(&w, &grad), polar.polar_upper(), rho, h, opts.gap_feasibility_slack);
                if let Some(last) = trace.last_mut() {
                    last.gap = Some(gap);
                }
            }
            Err(e) => return Err(fail(e, w, rho, trace, rejected)),
        }
    }

    Ok(GcgOutput { state: w, rho, trace, stop, rejected_improvements: rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcg::{DenseModel, L1Oracle};
    use crate::losses::SquaredLoss;
    use ndarray::array;

    fn opts(rule: StepRule) -> SolverOptions {
        SolverOptions { max_iters: 50, step_rule: rule, rel_obj_tol: 0.0, ..Default::default() }
    }

    #[test]
    fn scalar_soft_threshold() {
        let mut model = DenseModel::new(SquaredLoss::new(array![[2.0]]), L1Oracle);
        let out = run_gcg(&mut model, HSpec::Linear { lambda: 1.0 }, &mut NoImprove, &opts(StepRule::JointLineSearch)).unwrap();
        assert!((out.state.w[[0, 0]] - 1.0).abs() < 1e-6);
        assert!((out.trace.last().unwrap().objective - 1.5).abs() < 1e-6);
        let gap = out.trace.last().unwrap().gap.unwrap();
        assert!(gap >= 0.0 && gap < 1e-6);
    }

    #[test]
    fn dominating_lambda_keeps_zero() {
        let mut model = DenseModel::new(SquaredLoss::new(array![[2.0]]), L1Oracle);
        let out = run_gcg(&mut model, HSpec::Linear { lambda: 3.0 }, &mut NoImprove, &opts(StepRule::JointLineSearch)).unwrap();
        assert_eq!(out.state.w[[0, 0]], 0.0);
        assert_eq!(out.rho, 0.0);
        assert_eq!(out.trace.last().unwrap().gap, Some(0.0));
    }

    #[test]
    fn every_rule_converges_on_a_small_lasso() {
        let target = array![[3.0, -0.5], [0.2, -2.0]];
        let lambda = 1.0;
        // Soft-thresholded target.
        let f_star = 0.5 * (1.0 + 1.0 + 0.25 + 0.04) + lambda * (2.0 + 1.0);
        for rule in [StepRule::JointLineSearch, StepRule::Adaptive, StepRule::OpenLoop] {
            let mut model = DenseModel::new(SquaredLoss::new(target.clone()), L1Oracle);
            let o = SolverOptions { max_iters: 2000, ..opts(rule) };
            let out = run_gcg(&mut model, HSpec::Linear { lambda }, &mut NoImprove, &o).unwrap();
            let f = out.trace.last().unwrap().objective;
            assert!(f - f_star < 5e-3, "{rule:?}: {f} vs {f_star}");
            assert!(f >= f_star - 1e-9);
        }
    }

    #[test]
    fn indicator_stays_in_ball() {
        let target = array![[3.0, -4.0]];
        for rule in [StepRule::JointLineSearch, StepRule::Adaptive, StepRule::OpenLoop] {
            let mut model = DenseModel::new(SquaredLoss::new(target.clone()), L1Oracle);
            let o = SolverOptions { max_iters: 500, ..opts(rule) };
            let out = run_gcg(&mut model, HSpec::Indicator { zeta: 2.0 }, &mut NoImprove, &o).unwrap();
            for r in out.trace.records() {
                assert!(r.rho <= 2.0 + 1e-12);
            }
            let l1: f64 = out.state.w.iter().map(|v| v.abs()).sum();
            assert!(l1 <= out.rho + 1e-12);
            // Projection of the target onto the ℓ1 ball of radius 2.
            assert!((out.state.w[[0, 0]] - 0.5).abs() + (out.state.w[[0, 1]] + 1.5).abs() < 2e-2, "{rule:?} {:?}", out.state.w);
        }
    }

    #[test]
    fn missing_lipschitz_is_reported() {
        struct NoHint(SquaredLoss);
        impl crate::losses::SmoothLoss for NoHint {
            fn shape(&self) -> (usize, usize) {
                self.0.shape()
            }
            fn value(&self, w: &ndarray::Array2<f64>) -> f64 {
                self.0.value(w)
            }
            fn value_grad(&self, w: &ndarray::Array2<f64>) -> (f64, ndarray::Array2<f64>) {
                self.0.value_grad(w)
            }
        }
        let mut model = DenseModel::new(NoHint(SquaredLoss::new(array![[1.0]])), L1Oracle);
        let err = run_gcg(&mut model, HSpec::Linear { lambda: 0.1 }, &mut NoImprove, &opts(StepRule::OpenLoop)).unwrap_err();
        assert_eq!(err.error, GcgError::MissingLipschitz);
        assert_eq!(err.last.trace.len(), 1);
    }
}
