//! Smooth losses over matrix-shaped points.

mod huber;
mod logistic;
mod lsq;
mod masked;
mod squared;

pub use huber::SmoothedL1;
pub use logistic::{LabeledDesign, MulticlassLogistic};
pub use lsq::LinearLeastSquares;
pub use masked::{MaskedObservations, MaskedSquared};
pub use squared::SquaredLoss;

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("label {label} of example {example} is outside 0..{classes}")]
    LabelOutOfRange {
        example: usize,
        label: usize,
        classes: usize,
    },
    #[error("design has no examples")]
    NoExamples,
    #[error("train and test share the entry ({row}, {col})")]
    OverlappingSplit { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A differentiable loss over `rows × cols` matrices.
pub trait SmoothLoss {
    fn shape(&self) -> (usize, usize);

    fn value(&self, w: &Array2<f64>) -> f64;

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>);

    fn grad(&self, w: &Array2<f64>) -> Array2<f64> {
        self.value_grad(w).1
    }

    /// Upper bound on the gradient's Lipschitz constant, when known.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    /// Hessian applied to a direction, when the loss provides one.
    fn hvp(&self, _w: &Array2<f64>, _d: &Array2<f64>) -> Option<Array2<f64>> {
        None
    }

    /// True when the loss is quadratic, so `hvp` does not depend on the point.
    fn is_quadratic(&self) -> bool {
        false
    }
}

impl<L: SmoothLoss + ?Sized> SmoothLoss for &L {
    fn shape(&self) -> (usize, usize) {
        (**self).shape()
    }
    fn value(&self, w: &Array2<f64>) -> f64 {
        (**self).value(w)
    }
    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        (**self).value_grad(w)
    }
    fn grad(&self, w: &Array2<f64>) -> Array2<f64> {
        (**self).grad(w)
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        (**self).lipschitz_hint()
    }
    fn hvp(&self, w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        (**self).hvp(w, d)
    }
    fn is_quadratic(&self) -> bool {
        (**self).is_quadratic()
    }
}

pub(crate) fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<(), LossError> {
    if expected == got {
        Ok(())
    } else {
        Err(LossError::ShapeMismatch { expected, got })
    }
}

#[cfg(test)]
pub(crate) mod checks {
    use super::SmoothLoss;
    use crate::numkit::frob_dot;
    use crate::testutil::{fd_grad, gaussian_matrix, rel_err};
    use ndarray::Array2;

    /// Gradient against central differences at `probes` random points.
    pub fn gradient_check<L: SmoothLoss>(loss: &L, probes: usize, scale: f64, tol: f64) {
        let (r, c) = loss.shape();
        for k in 0..probes {
            let w = gaussian_matrix(r, c, 1000 + k as u64) * scale;
            let (_, g) = loss.value_grad(&w);
            let fd = fd_grad(|p| loss.value(p), &w, 1e-6);
            let err = rel_err(&g, &fd);
            assert!(err <= tol, "probe {k}: relative gradient error {err:.3e}");
        }
    }

    /// Quadratic upper model with the advertised Lipschitz constant.
    pub fn descent_lemma<L: SmoothLoss>(loss: &L, probes: usize) {
        let l = loss.lipschitz_hint().expect("loss advertises a Lipschitz bound");
        let (r, c) = loss.shape();
        for k in 0..probes {
            let w = gaussian_matrix(r, c, 2000 + k as u64);
            let d: Array2<f64> = gaussian_matrix(r, c, 3000 + k as u64);
            let (f, g) = loss.value_grad(&w);
            let model = f + frob_dot(&d, &g) + 0.5 * l * frob_dot(&d, &d);
            assert!(loss.value(&(&w + &d)) <= model + 1e-9 * model.abs().max(1.0));
        }
    }
}
