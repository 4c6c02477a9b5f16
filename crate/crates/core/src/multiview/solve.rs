use ndarray::{concatenate, s, Array2, Axis};
use thiserror::Error;

use super::{MultiviewError, TwoViewPolar, ViewSplit};
use crate::gcg::{GcgFailure, GcgOutput};
use crate::losses::{SmoothLoss, SmoothedL1, SquaredLoss};
use crate::lowrank::{solve_lowrank_gcg, ColumnNorm, FactorModel, LowRankOptions, LowRankProblem, Materialized};

/// Entrywise loss applied to the stacked reconstruction `[X; Y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViewLoss {
    /// Huber-smoothed `ℓ1`, robust to sparse corruption.
    #[default]
    SmoothedL1,
    Squared,
}

#[derive(Debug, Error)]
pub enum MultiviewSolveError {
    #[error(transparent)]
    Setup(#[from] MultiviewError),
    #[error(transparent)]
    Solver(#[from] GcgFailure<FactorModel>),
}

/// Dictionaries `A`, `B`, shared codes `H`, and the solver output.
#[derive(Debug, Clone)]
pub struct MultiviewFit {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub h: Array2<f64>,
    pub output: GcgOutput<FactorModel>,
}

impl MultiviewFit {
    pub fn reconstruction(&self) -> (Array2<f64>, Array2<f64>) {
        (self.a.dot(&self.h), self.b.dot(&self.h))
    }
}

/// Stacks the two views after checking them against `split`.
pub fn stack_views(x: &Array2<f64>, y: &Array2<f64>, split: &ViewSplit) -> Result<Array2<f64>, MultiviewError> {
    if x.nrows() != split.n1 || y.nrows() != split.n2 {
        return Err(MultiviewError::InvalidSplit(format!(
            "views have {} and {} rows, split expects {} and {}",
            x.nrows(),
            y.nrows(),
            split.n1,
            split.n2
        )));
    }
    if x.ncols() != y.ncols() {
        return Err(MultiviewError::InvalidSplit(format!("views have {} and {} columns", x.ncols(), y.ncols())));
    }
    Ok(concatenate![Axis(0), x.view(), y.view()])
}

type Metric = Box<dyn Fn(&FactorModel) -> f64>;

fn run<L: SmoothLoss>(loss: L, lambda: f64, split: ViewSplit, opts: &LowRankOptions, metric: Option<Metric>) -> Result<GcgOutput<FactorModel>, GcgFailure<FactorModel>> {
    let polar = TwoViewPolar { seed: TwoViewPolar::new(split).seed ^ opts.solver.seed, ..TwoViewPolar::new(split) };
    let mut problem = LowRankProblem::new(Materialized(loss), polar, ColumnNorm::TwoView(split));
    if let Some(metric) = metric {
        problem = problem.with_metric(metric);
    }
    solve_lowrank_gcg(&mut problem, lambda, opts)
}

/// Two-view dictionary learning: `min ℓ([X; Y], [A; B]H) + λ Σᵢ ‖H_{i:}‖`
/// over columns with `‖A_{:i}‖ ≤ β` and `‖B_{:i}‖ ≤ γ`, solved as a gauge problem.
pub fn solve_multiview(
    x: &Array2<f64>,
    y: &Array2<f64>,
    lambda: f64,
    split: &ViewSplit,
    loss: ViewLoss,
    opts: &LowRankOptions,
) -> Result<MultiviewFit, MultiviewSolveError> {
    solve_multiview_tracked(x, y, lambda, split, loss, opts, None)
}

/// [`solve_multiview`] recording `‖X* − X̂‖² + ‖Y* − Ŷ‖²` against clean views in the trace.
pub fn solve_multiview_tracked(
    x: &Array2<f64>,
    y: &Array2<f64>,
    lambda: f64,
    split: &ViewSplit,
    loss: ViewLoss,
    opts: &LowRankOptions,
    clean: Option<(&Array2<f64>, &Array2<f64>)>,
) -> Result<MultiviewFit, MultiviewSolveError> {
    let z = stack_views(x, y, split)?;
    let metric = clean.map(|(cx, cy)| {
        let truth = concatenate![Axis(0), cx.view(), cy.view()];
        Box::new(move |m: &FactorModel| (&truth - &m.to_dense()).iter().map(|d| d * d).sum::<f64>()) as Metric
    });
    let output = match loss {
        ViewLoss::SmoothedL1 => run(SmoothedL1::with_default_width(z), lambda, *split, opts, metric)?,
        ViewLoss::Squared => run(SquaredLoss::new(z), lambda, *split, opts, metric)?,
    };
    let u = &output.state.u;
    Ok(MultiviewFit {
        a: u.slice(s![..split.n1, ..]).to_owned(),
        b: u.slice(s![split.n1.., ..]).to_owned(),
        h: output.state.v.clone(),
        output,
    })
}
