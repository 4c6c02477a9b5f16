use ndarray::{Array1, Array2, Axis};

use super::{LossError, SmoothLoss};

/// Design matrix with examples as columns plus integer labels.
#[derive(Debug, Clone)]
pub struct LabeledDesign {
    x: Array2<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDesign {
    pub fn new(x: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self, LossError> {
        let m = x.ncols();
        if m == 0 {
            return Err(LossError::NoExamples);
        }
        if labels.len() != m {
            return Err(LossError::ShapeMismatch { expected: (1, m), got: (1, labels.len()) });
        }
        if let Some((example, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(LossError::LabelOutOfRange { example, label, classes });
        }
        Ok(Self { x, labels, classes })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn examples(&self) -> usize {
        self.x.ncols()
    }

    /// Predicted class per example for weights `W` (`n × C`).
    pub fn predict(&self, w: &Array2<f64>) -> Vec<usize> {
        let scores = self.x.t().dot(w);
        scores
            .axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &s)| if s > best.1 { (c, s) } else { best })
                    .0
            })
            .collect()
    }

    pub fn accuracy(&self, w: &Array2<f64>) -> f64 {
        let hits = self.predict(w).iter().zip(&self.labels).filter(|(p, y)| p == y).count();
        hits as f64 / self.examples() as f64
    }
}

/// Average multinomial negative log-likelihood.
#[derive(Debug, Clone)]
pub struct MulticlassLogistic {
    data: LabeledDesign,
    lipschitz: f64,
}

impl MulticlassLogistic {
    pub fn new(data: LabeledDesign) -> Self {
        // The softmax Hessian is bounded by ½ I per example.
        let frob2: f64 = data.x.iter().map(|v| v * v).sum();
        let lipschitz = 0.5 * frob2 / data.examples() as f64;
        Self { data, lipschitz }
    }

    pub fn data(&self) -> &LabeledDesign {
        &self.data
    }

    /// Class probabilities as a `C × m` matrix, with the log-normalizers.
    fn probabilities(&self, w: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        let scores = w.t().dot(&self.data.x);
        let mut p = scores.clone();
        let mut log_norm = Array1::zeros(self.data.examples());
        for (i, mut col) in p.axis_iter_mut(Axis(1)).enumerate() {
            let shift = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            col.mapv_inplace(|s| (s - shift).exp());
            let total = col.sum();
            col /= total;
            log_norm[i] = shift + total.ln();
        }
        (p, log_norm, scores)
    }
}

impl SmoothLoss for MulticlassLogistic {
    fn shape(&self) -> (usize, usize) {
        (self.data.x.nrows(), self.data.classes)
    }

    fn value(&self, w: &Array2<f64>) -> f64 {
        self.value_grad(w).0
    }

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let m = self.data.examples() as f64;
        let (mut p, log_norm, scores) = self.probabilities(w);
        let mut nll = 0.0;
        for (i, &y) in self.data.labels.iter().enumerate() {
            nll += log_norm[i] - scores[[y, i]];
            p[[y, i]] -= 1.0;
        }
        let grad = self.data.x.dot(&p.t()) / m;
        (nll / m, grad)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn hvp(&self, w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        let m = self.data.examples() as f64;
        let (p, _, _) = self.probabilities(w);
        let r = d.t().dot(&self.data.x);
        let s = &p * &r;
        let col_sums = s.sum_axis(Axis(0));
        let j = &s - &(&p * &col_sums.insert_axis(Axis(0)));
        Some(self.data.x.dot(&j.t()) / m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::checks::{descent_lemma, gradient_check};
    use crate::numkit::frob_dot;
    use crate::testutil::{gaussian_matrix, rel_err};

    fn instance(n: usize, c: usize, m: usize, seed: u64) -> MulticlassLogistic {
        let x = gaussian_matrix(n, m, seed);
        let labels = (0..m).map(|i| (i * 7 + seed as usize) % c).collect();
        MulticlassLogistic::new(LabeledDesign::new(x, labels, c).unwrap())
    }

    #[test]
    fn uniform_at_zero() {
        let loss = instance(5, 4, 9, 1);
        let (v, g) = loss.value_grad(&Array2::zeros((5, 4)));
        assert!((v - 4f64.ln()).abs() < 1e-12);
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_is_flat() {
        let loss = instance(3, 1, 6, 2);
        let w = gaussian_matrix(3, 1, 3);
        assert!(loss.value(&w).abs() < 1e-12);
        let d = gaussian_matrix(3, 1, 4);
        assert!(loss.hvp(&w, &d).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_and_curvature_bound() {
        let loss = instance(7, 4, 9, 5);
        gradient_check(&loss, 20, 1.0, 1e-6);
        descent_lemma(&loss, 20);
    }

    #[test]
    fn hvp_matches_gradient_differences_and_is_symmetric() {
        let loss = instance(7, 4, 9, 6);
        let w = gaussian_matrix(7, 4, 7);
        let d = gaussian_matrix(7, 4, 8);
        let h = 1e-5;
        let fd = (loss.grad(&(&w + &(&d * h))) - loss.grad(&(&w - &(&d * h)))) / (2.0 * h);
        assert!(rel_err(&loss.hvp(&w, &d).unwrap(), &fd) <= 1e-5);
        let d2 = gaussian_matrix(7, 4, 9);
        let a = frob_dot(&d, &loss.hvp(&w, &d2).unwrap());
        let b = frob_dot(&d2, &loss.hvp(&w, &d).unwrap());
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        assert!(loss.hvp(&w, &Array2::zeros((7, 4))).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convex_along_segments() {
        let loss = instance(6, 3, 10, 10);
        for k in 0..20 {
            let a = gaussian_matrix(6, 3, 100 + k) * 2.0;
            let b = gaussian_matrix(6, 3, 200 + k) * 2.0;
            let mid = (&a + &b) * 0.5;
            assert!(loss.value(&mid) <= 0.5 * (loss.value(&a) + loss.value(&b)) + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_labels() {
        let x = gaussian_matrix(2, 3, 1);
        assert!(matches!(
            LabeledDesign::new(x.clone(), vec![0, 3, 1], 3),
            Err(LossError::LabelOutOfRange { .. })
        ));
        assert!(matches!(LabeledDesign::new(Array2::zeros((2, 0)), vec![], 2), Err(LossError::NoExamples)));
    }
}
