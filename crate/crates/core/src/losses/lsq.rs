use ndarray::Array2;

use super::{LossError, SmoothLoss};
use crate::numkit::spectral_norm;

/// `½‖AW − B‖²_F` with a fixed design `A`.
#[derive(Debug, Clone)]
pub struct LinearLeastSquares {
    design: Array2<f64>,
    target: Array2<f64>,
    lipschitz: f64,
}

impl LinearLeastSquares {
    pub fn new(design: Array2<f64>, target: Array2<f64>) -> Result<Self, LossError> {
        if design.nrows() != target.nrows() {
            return Err(LossError::ShapeMismatch { expected: (design.nrows(), target.ncols()), got: target.dim() });
        }
        let s = spectral_norm(&design).map_err(|e| LossError::InvalidParameter(e.to_string()))?;
        Ok(Self { design, target, lipschitz: s * s })
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn target(&self) -> &Array2<f64> {
        &self.target
    }
}

impl SmoothLoss for LinearLeastSquares {
    fn shape(&self) -> (usize, usize) {
        (self.design.ncols(), self.target.ncols())
    }

    fn value(&self, w: &Array2<f64>) -> f64 {
        let r = self.design.dot(w) - &self.target;
        0.5 * r.iter().map(|x| x * x).sum::<f64>()
    }

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let r = self.design.dot(w) - &self.target;
        (0.5 * r.iter().map(|x| x * x).sum::<f64>(), self.design.t().dot(&r))
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn hvp(&self, _w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        Some(self.design.t().dot(&self.design.dot(d)))
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::gaussian_matrix;

    #[test]
    fn gradient_and_curvature() {
        let loss = LinearLeastSquares::new(gaussian_matrix(7, 4, 1), gaussian_matrix(7, 2, 2)).unwrap();
        crate::losses::checks::gradient_check(&loss, 10, 1.0, 1e-6);
        crate::losses::checks::descent_lemma(&loss, 10);
    }
}
