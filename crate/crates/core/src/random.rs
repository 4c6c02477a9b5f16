//! Seeded random generation helpers used by the generators and tests.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(n: usize, rng: &mut Rng) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| StandardNormal.sample(rng)))
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Uniform direction on the sphere of the given radius.
pub fn sphere_vector(n: usize, radius: f64, rng: &mut Rng) -> Array1<f64> {
    loop {
        let v = gaussian_vector(n, rng);
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return v * (radius / norm);
        }
    }
}
