//! Two-view dictionary gauge: columns `[a; b]` with `‖a‖ ≤ β`, `‖b‖ ≤ γ`.

mod polar;
mod solve;

pub use polar::{
    multiview_polar, multiview_power_heuristic, optimal_mu, power_heuristic_detailed, recover_atoms, recover_unit_blocks, scale_rows, Boundary,
    HeuristicMiss, HeuristicOutcome, MultiviewPolar, MuObjective, TwoViewPolar, MU_MAX, MU_MIN,
};
pub use solve::{solve_multiview, solve_multiview_tracked, stack_views, MultiviewFit, MultiviewSolveError, ViewLoss};

use ndarray::{s, ArrayView1};
use thiserror::Error;

use crate::numkit::NumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiviewError {
    #[error("invalid view split: {0}")]
    InvalidSplit(String),
    #[error("near-null space of the KKT matrix has no sign-mixed pairing")]
    DegenerateNullspace,
    #[error("{0} rows is too many for the dense atom recovery")]
    TooLarge(usize),
    #[error(transparent)]
    Numeric(#[from] NumError),
}

/// Row split of `[X; Y]` into an `n1`-row x-view and an `n2`-row y-view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSplit {
    pub n1: usize,
    pub n2: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl ViewSplit {
    pub fn new(n1: usize, n2: usize, beta: f64, gamma: f64) -> Result<Self, MultiviewError> {
        if n1 == 0 || n2 == 0 {
            return Err(MultiviewError::InvalidSplit("both views need at least one row".into()));
        }
        if !(beta > 0.0 && gamma > 0.0 && beta.is_finite() && gamma.is_finite()) {
            return Err(MultiviewError::InvalidSplit(format!("radii must be positive, got β = {beta}, γ = {gamma}")));
        }
        Ok(Self { n1, n2, beta, gamma })
    }

    pub fn rows(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn blocks<'a>(&self, c: ArrayView1<'a, f64>) -> (ArrayView1<'a, f64>, ArrayView1<'a, f64>) {
        assert_eq!(c.len(), self.rows(), "column length does not match the view split");
        (c.slice_move(s![..self.n1]), c.slice_move(s![self.n1..]))
    }
}
