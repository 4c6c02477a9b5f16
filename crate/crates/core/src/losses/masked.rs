use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};

use super::{check_shape, LossError, SmoothLoss};
use crate::numkit::TripletMatrix;

/// Observed entries of an `n × m` matrix with an optional held-out part.
#[derive(Debug, Clone)]
pub struct MaskedObservations {
    train: TripletMatrix,
    test: Option<TripletMatrix>,
}

impl MaskedObservations {
    pub fn new(train: TripletMatrix, test: Option<TripletMatrix>) -> Result<Self, LossError> {
        if let Some(test) = &test {
            check_shape(train.shape(), test.shape())?;
            let seen: HashSet<(usize, usize)> = train.iter().map(|(i, j, _)| (i, j)).collect();
            if let Some((row, col, _)) = test.iter().find(|(i, j, _)| seen.contains(&(*i, *j))) {
                return Err(LossError::OverlappingSplit { row, col });
            }
        }
        Ok(Self { train, test })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.train.shape()
    }

    pub fn train(&self) -> &TripletMatrix {
        &self.train
    }

    pub fn test(&self) -> Option<&TripletMatrix> {
        self.test.as_ref()
    }
}

/// `½ Σ_observed (X_ij − W_ij)²`.
#[derive(Debug, Clone)]
pub struct MaskedSquared {
    obs: TripletMatrix,
}

fn row_dot_col(u: &Array2<f64>, v: &Array2<f64>, i: usize, j: usize) -> f64 {
    u.row(i).dot(&v.column(j))
}

impl MaskedSquared {
    pub fn new(obs: &MaskedObservations) -> Self {
        Self { obs: obs.train.clone() }
    }

    pub fn from_triplets(obs: TripletMatrix) -> Self {
        Self { obs }
    }

    pub fn observations(&self) -> &TripletMatrix {
        &self.obs
    }

    /// `(UV)_ij` on the observed pattern, never forming `UV`.
    pub fn predict_factored(&self, u: &Array2<f64>, v: &Array2<f64>) -> Vec<f64> {
        self.obs.iter().map(|(i, j, _)| row_dot_col(u, v, i, j)).collect()
    }

    pub fn value_factored(&self, u: &Array2<f64>, v: &Array2<f64>) -> f64 {
        self.obs
            .iter()
            .map(|(i, j, x)| 0.5 * (x - row_dot_col(u, v, i, j)).powi(2))
            .sum()
    }

    /// Value and the gradient with respect to `W = UV` as a sparse matrix.
    pub fn value_grad_factored(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, TripletMatrix) {
        let resid: Vec<f64> = self.obs.iter().map(|(i, j, x)| row_dot_col(u, v, i, j) - x).collect();
        let value = 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
        (value, self.obs.with_values(resid))
    }

    /// Value and gradients with respect to the factors `U` and `V`.
    pub fn value_grad_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
        let mut gu = Array2::zeros(u.dim());
        let mut gv = Array2::zeros(v.dim());
        let mut value = 0.0;
        for (i, j, x) in self.obs.iter() {
            let r = row_dot_col(u, v, i, j) - x;
            value += 0.5 * r * r;
            gu.row_mut(i).scaled_add(r, &v.column(j));
            gv.column_mut(j).scaled_add(r, &u.row(i));
        }
        (value, gu, gv)
    }

    /// Root mean squared error of `UV` against a set of triples.
    pub fn rmse_factored(u: &Array2<f64>, v: &Array2<f64>, against: &TripletMatrix) -> f64 {
        if against.is_empty() {
            return 0.0;
        }
        let sse: f64 = against.iter().map(|(i, j, x)| (x - row_dot_col(u, v, i, j)).powi(2)).sum();
        (sse / against.nnz() as f64).sqrt()
    }

    pub fn rmse_dense(w: &Array2<f64>, against: &TripletMatrix) -> f64 {
        if against.is_empty() {
            return 0.0;
        }
        let sse: f64 = against.iter().map(|(i, j, x)| (x - w[[i, j]]).powi(2)).sum();
        (sse / against.nnz() as f64).sqrt()
    }

    /// Entries of `u vᵀ` on the observed pattern.
    pub(crate) fn rank_one_on_mask(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Vec<f64> {
        self.obs.iter().map(|(i, j, _)| u[i] * v[j]).collect()
    }
}

impl SmoothLoss for MaskedSquared {
    fn shape(&self) -> (usize, usize) {
        self.obs.shape()
    }

    fn value(&self, w: &Array2<f64>) -> f64 {
        self.obs.iter().map(|(i, j, x)| 0.5 * (x - w[[i, j]]).powi(2)).sum()
    }

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut g = Array2::zeros(self.obs.shape());
        let mut value = 0.0;
        for (i, j, x) in self.obs.iter() {
            let r = w[[i, j]] - x;
            value += 0.5 * r * r;
            g[[i, j]] = r;
        }
        (value, g)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(1.0)
    }

    fn hvp(&self, _w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        let mut out = Array2::zeros(self.obs.shape());
        for (i, j, _) in self.obs.iter() {
            out[[i, j]] = d[[i, j]];
        }
        Some(out)
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::checks::{descent_lemma, gradient_check};
    use crate::random::rng_from_seed;
    use crate::testutil::gaussian_matrix;
    use rand::Rng;

    fn random_mask(n: usize, m: usize, frac: f64, seed: u64) -> TripletMatrix {
        let mut rng = rng_from_seed(seed);
        let triples = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|_| rng.gen::<f64>() < frac)
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(i, j)| (i, j, (i as f64 - j as f64) * 0.3))
            .collect();
        TripletMatrix::new(n, m, triples).unwrap()
    }

    #[test]
    fn exact_fit_and_single_observation() {
        let obs = random_mask(5, 4, 0.5, 1);
        let loss = MaskedSquared::from_triplets(obs.clone());
        let (v, g) = loss.value_grad(&obs.to_dense());
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));

        let one = MaskedSquared::from_triplets(TripletMatrix::new(2, 2, vec![(0, 0, 2.0)]).unwrap());
        let (v, g) = one.value_grad(&Array2::zeros((2, 2)));
        assert_eq!(v, 2.0);
        assert_eq!(g[[0, 0]], -2.0);
        assert_eq!(g[[1, 1]], 0.0);
    }

    #[test]
    fn gradient_and_descent_lemma() {
        let loss = MaskedSquared::from_triplets(random_mask(6, 5, 0.4, 2));
        gradient_check(&loss, 20, 1.0, 1e-6);
        descent_lemma(&loss, 20);
    }

    #[test]
    fn factored_paths_agree_with_dense() {
        let loss = MaskedSquared::from_triplets(random_mask(7, 6, 0.5, 3));
        let u = gaussian_matrix(7, 3, 4);
        let v = gaussian_matrix(3, 6, 5);
        let w = u.dot(&v);
        let (fd, gd) = loss.value_grad(&w);
        let (ff, gs) = loss.value_grad_factored(&u, &v);
        assert!((fd - ff).abs() < 1e-12 * fd.max(1.0));
        assert!((gs.to_dense() - &gd).iter().all(|x| x.abs() < 1e-12));
        let (fuv, gu, gv) = loss.value_grad_uv(&u, &v);
        assert!((fuv - fd).abs() < 1e-12 * fd.max(1.0));
        assert!((gu - gd.dot(&v.t())).iter().all(|x| x.abs() < 1e-10));
        assert!((gv - u.t().dot(&gd)).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn overlapping_split_rejected() {
        let a = TripletMatrix::new(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let b = TripletMatrix::new(2, 2, vec![(0, 0, 3.0)]).unwrap();
        assert!(matches!(MaskedObservations::new(a, Some(b)), Err(LossError::OverlappingSplit { .. })));
    }
}
