use super::{ColumnNorm, FactorModel, FactorPolar, FactoredLoss, LocalImprove, LocalMethod, LowRankProblem, Materialized, TracePolar};
use crate::gcg::{run_gcg, GcgFailure, GcgOutput, GcgProblem, HSpec, NoImprove, SolverOptions, SolverTrace, StopReason};
use crate::losses::{LabeledDesign, MaskedObservations, MaskedSquared, MulticlassLogistic};
use crate::numkit::{PowerOptions, SmoothOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankOptions {
    pub solver: SolverOptions,
    pub local: SmoothOptions,
    pub local_method: LocalMethod,
    pub power: PowerOptions,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            local: SmoothOptions::default(),
            local_method: LocalMethod::QuasiNewton,
            power: PowerOptions::default(),
        }
    }
}

impl LowRankOptions {
    fn trace_polar(&self) -> TracePolar {
        TracePolar { power: PowerOptions { seed: self.power.seed ^ self.solver.seed, ..self.power } }
    }
}

pub type LowRankResult = Result<GcgOutput<FactorModel>, GcgFailure<FactorModel>>;

fn invalid<P: GcgProblem<State = FactorModel>>(problem: &P, error: crate::gcg::GcgError) -> GcgFailure<FactorModel> {
    GcgFailure {
        error,
        last: GcgOutput {
            state: problem.zero(),
            rho: 0.0,
            trace: SolverTrace::new(),
            stop: StopReason::MaxIters,
            rejected_improvements: 0,
        },
    }
}

/// Conditional gradient with factor splitting and interleaved local descent.
///
/// With `opts.solver.improve == false` this is exactly the plain driver.
pub fn solve_lowrank_gcg<L, P>(problem: &mut LowRankProblem<L, P>, lambda: f64, opts: &LowRankOptions) -> LowRankResult
where
    L: FactoredLoss,
    P: FactorPolar<L::Grad>,
{
    let h = HSpec::linear(lambda).map_err(|e| invalid(problem, e))?;
    if opts.solver.improve {
        let mut hook = LocalImprove::new(lambda).with_smooth(opts.local.clone()).with_method(opts.local_method);
        run_gcg(problem, h, &mut hook, &opts.solver)
    } else {
        run_gcg(problem, h, &mut NoImprove, &opts.solver)
    }
}

/// Trace-norm matrix completion; the trace metric is held-out RMSE when a test split exists.
pub fn solve_matrix_completion(obs: &MaskedObservations, lambda: f64, opts: &LowRankOptions) -> LowRankResult {
    let mut problem = LowRankProblem::new(MaskedSquared::new(obs), opts.trace_polar(), ColumnNorm::L2);
    if let Some(test) = obs.test().cloned() {
        problem = problem.with_metric(move |m| MaskedSquared::rmse_factored(&m.u, &m.v, &test));
    }
    solve_lowrank_gcg(&mut problem, lambda, opts)
}

/// Trace-norm regularized multinomial logistic regression; the metric is
/// accuracy on `heldout`, or on the training data when none is given.
pub fn solve_multiclass_tracenorm(data: &LabeledDesign, lambda: f64, opts: &LowRankOptions, heldout: Option<&LabeledDesign>) -> LowRankResult {
    let eval = heldout.unwrap_or(data).clone();
    let mut problem = LowRankProblem::new(Materialized(MulticlassLogistic::new(data.clone())), opts.trace_polar(), ColumnNorm::L2)
        .with_metric(move |m| eval.accuracy(&m.to_dense()));
    solve_lowrank_gcg(&mut problem, lambda, opts)
}
