use ndarray::Array2;

use super::SmoothLoss;

/// `½‖W − T‖²_F` for a fully observed target.
#[derive(Debug, Clone)]
pub struct SquaredLoss {
    target: Array2<f64>,
}

impl SquaredLoss {
    pub fn new(target: Array2<f64>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &Array2<f64> {
        &self.target
    }
}

impl SmoothLoss for SquaredLoss {
    fn shape(&self) -> (usize, usize) {
        self.target.dim()
    }

    fn value(&self, w: &Array2<f64>) -> f64 {
        0.5 * w.iter().zip(self.target.iter()).map(|(a, t)| (a - t).powi(2)).sum::<f64>()
    }

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let g = w - &self.target;
        (0.5 * g.iter().map(|x| x * x).sum::<f64>(), g)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(1.0)
    }

    fn hvp(&self, _w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        Some(d.clone())
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
    fn gradient_check() {
        crate::losses::checks::gradient_check(&SquaredLoss::new(gaussian_matrix(4, 3, 9)), 20, 1.0, 1e-6);
    }
}
