use ndarray::Array2;

use crate::random::{self, rng_from_seed};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    random::gaussian_matrix(rows, cols, &mut rng_from_seed(seed))
}

/// Central finite-difference gradient of a matrix function.
pub fn fd_grad<F: Fn(&Array2<f64>) -> f64>(f: F, w: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(w.dim());
    let mut probe = w.clone();
    for idx in ndarray::indices(w.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let fp = f(&probe);
        probe[idx] = orig - h;
        let fm = f(&probe);
        probe[idx] = orig;
        g[idx] = (fp - fm) / (2.0 * h);
    }
    g
}

pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = crate::numkit::frob_norm(&(a - b));
    diff / crate::numkit::frob_norm(b).max(1e-12)
}
