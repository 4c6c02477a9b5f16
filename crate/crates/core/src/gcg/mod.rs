//! Generic conditional-gradient driver for `ℓ(w) + h(κ(w))` with
//! `h = λ·id` or `h` the indicator of `[0, ζ]`.

mod dense;
mod driver;
mod steps;
mod trace;

pub use dense::{duality_gap, gap_from_parts, DenseModel, DenseState, GaugeOracle, L1Oracle};
pub use driver::{run_gcg, GcgFailure, GcgOutput, GcgProblem, ImproveHook, NoImprove, StopReason};
pub use steps::{
    joint_eta_theta, joint_search, minimize_quadratic, step_adaptive, step_open_loop, Quad2, Region,
    Segment,
};
pub use trace::{IterRecord, SolverTrace};

use thiserror::Error;

use crate::numkit::NumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcgError {
    #[error("polar oracle failed: {0}")]
    Oracle(String),
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("the open-loop and adaptive step rules need a Lipschitz constant for the loss")]
    MissingLipschitz,
}

/// The outer function applied to the gauge bound `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HSpec {
    /// `h(ρ) = λρ`
    Linear { lambda: f64 },
    /// `h(ρ) = 0` on `[0, ζ]`, `+∞` beyond.
    Indicator { zeta: f64 },
}

impl HSpec {
    pub fn linear(lambda: f64) -> Result<Self, GcgError> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Self::Linear { lambda })
        } else {
            Err(GcgError::InvalidOptions(format!("lambda must be positive, got {lambda}")))
        }
    }

    pub fn indicator(zeta: f64) -> Result<Self, GcgError> {
        if zeta > 0.0 && zeta.is_finite() {
            Ok(Self::Indicator { zeta })
        } else {
            Err(GcgError::InvalidOptions(format!("zeta must be positive, got {zeta}")))
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            Self::Linear { lambda } => lambda * rho,
            Self::Indicator { zeta } => {
                if rho <= zeta * (1.0 + 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `η = 2/(t+2)` with the scale from the quadratic model.
    OpenLoop,
    /// Minimizer of the quadratic upper model.
    Adaptive,
    /// Joint minimization of the true objective over `(η, θ)`.
    JointLineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub time_budget_s: f64,
    pub step_rule: StepRule,
    /// Stop when the objective moved by less than this fraction over 5 iterations; 0 disables.
    pub rel_obj_tol: f64,
    pub seed: u64,
    pub improve: bool,
    /// Record the duality gap of every iterate (one extra polar call at the end).
    pub track_gap: bool,
    /// Relative slack on `κ°(−∇ℓ) ≤ λ` when deciding the gap is finite.
    pub gap_feasibility_slack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            time_budget_s: 600.0,
            step_rule: StepRule::JointLineSearch,
            rel_obj_tol: 1e-8,
            seed: 0,
            improve: true,
            track_gap: true,
            gap_feasibility_slack: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), GcgError> {
        if self.max_iters == 0 {
            return Err(GcgError::InvalidOptions("max_iters must be positive".into()));
        }
        if !(self.time_budget_s > 0.0) {
            return Err(GcgError::InvalidOptions("time_budget_s must be positive".into()));
        }
        if !(self.rel_obj_tol >= 0.0) || !(self.gap_feasibility_slack >= 0.0) {
            return Err(GcgError::InvalidOptions("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Output of a polar oracle: an atom with `⟨atom, direction⟩ = value` and the
/// guarantee `value ≥ factor·κ°(direction) − additive_error`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarAtom<A> {
    pub atom: A,
    pub value: f64,
    pub additive_error: f64,
    pub factor: f64,
}

impl<A> PolarAtom<A> {
    pub fn exact(atom: A, value: f64) -> Self {
        Self { atom, value, additive_error: 0.0, factor: 1.0 }
    }

    /// Upper bound on the true polar value implied by the oracle's guarantee.
    pub fn polar_upper(&self) -> f64 {
        (self.value + self.additive_error) / self.factor
    }
}
