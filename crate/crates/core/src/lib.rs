//! Generalized conditional gradient solvers for gauge-regularized problems.
//!
//! The crate is organised by role: [`numkit`] holds numeric primitives,
//! [`losses`] the smooth losses, [`gcg`] the generic driver, and the gauge
//! families live in [`lowrank`], [`multiview`] and [`structsparse`].
//! [`baselines`] provides accelerated proximal gradient and an alternating
//! multi-view solver used as references, and [`synth`] the seeded generators.

pub mod baselines;
pub mod gcg;
pub mod losses;
pub mod lowrank;
pub mod multiview;
pub mod numkit;
pub mod random;
pub mod structsparse;
pub mod synth;

#[cfg(test)]
mod testutil;

/// Crate version, echoed in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
