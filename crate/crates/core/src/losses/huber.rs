use ndarray::{Array2, Zip};

use super::{LossError, SmoothLoss};

/// Entrywise Huber smoothing of `‖W − T‖₁` with width `mu`.
#[derive(Debug, Clone)]
pub struct SmoothedL1 {
    target: Array2<f64>,
    mu: f64,
}

pub const DEFAULT_HUBER_WIDTH: f64 = 1e-4;

impl SmoothedL1 {
    pub fn new(target: Array2<f64>, mu: f64) -> Result<Self, LossError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(LossError::InvalidParameter(format!("huber width must be positive, got {mu}")));
        }
        Ok(Self { target, mu })
    }

    pub fn with_default_width(target: Array2<f64>) -> Self {
        Self { target, mu: DEFAULT_HUBER_WIDTH }
    }

    pub fn target(&self) -> &Array2<f64> {
        &self.target
    }

    pub fn width(&self) -> f64 {
        self.mu
    }

    fn entry(&self, z: f64) -> f64 {
        if z.abs() <= self.mu {
            z * z / (2.0 * self.mu)
        } else {
            z.abs() - 0.5 * self.mu
        }
    }
}

impl SmoothLoss for SmoothedL1 {
    fn shape(&self) -> (usize, usize) {
        self.target.dim()
    }

    fn value(&self, w: &Array2<f64>) -> f64 {
        w.iter().zip(self.target.iter()).map(|(a, t)| self.entry(a - t)).sum()
    }

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut g = Array2::zeros(w.dim());
        let mut value = 0.0;
        Zip::from(&mut g).and(w).and(&self.target).for_each(|gi, &a, &t| {
            let z = a - t;
            value += self.entry(z);
            *gi = (z / self.mu).clamp(-1.0, 1.0);
        });
        (value, g)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(1.0 / self.mu)
    }

    fn hvp(&self, w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        let mut out = Array2::zeros(w.dim());
        Zip::from(&mut out).and(w).and(&self.target).and(d).for_each(|o, &a, &t, &di| {
            if (a - t).abs() <= self.mu {
                *o = di / self.mu;
            }
        });
        Some(out)
    }
}
