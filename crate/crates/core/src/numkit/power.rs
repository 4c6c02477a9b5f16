use ndarray::Array1;

use super::{LinearOperator, NumError};
use crate::random::{gaussian_vector, rng_from_seed};

/// `(sigma, u, v)` with `M v = sigma u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub sigma: f64,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000, seed: 0x5eed }
    }
}

const CHECK_EVERY: usize = 8;

fn unit(n: usize, k: usize) -> Array1<f64> {
    let mut e = Array1::zeros(n);
    if n > 0 {
        e[k.min(n - 1)] = 1.0;
    }
    e
}

/// Leading singular triple by power iteration on `MᵀM`.
///
/// Convergence is declared once `‖Mᵀu − σv‖ ≤ tol·σ`; a zero operator returns
/// `σ = 0` with coordinate vectors.
pub fn top_singular_pair<M: LinearOperator + ?Sized>(
    m: &M,
    opts: &PowerOptions,
) -> Result<SingularTriple, NumError> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut rng = rng_from_seed(opts.seed);
    let mut v = gaussian_vector(cols, &mut rng);
    let norm = v.dot(&v).sqrt();
    v /= norm;

    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iter {
        let mv = m.apply(v.view());
        let sigma = mv.dot(&mv).sqrt();
        if sigma == 0.0 {
            // v landed in the null space; a zero operator is the only realistic case.
            let probe = m.apply_t(gaussian_vector(rows, &mut rng).view());
            if probe.iter().all(|&x| x == 0.0) {
                return Ok(SingularTriple { sigma: 0.0, u: unit(rows, 0), v: unit(cols, 0) });
            }
            let n = probe.dot(&probe).sqrt();
            v = probe / n;
            continue;
        }
        let u = &mv / sigma;
        let mtu = m.apply_t(u.view());
        if it % CHECK_EVERY == 0 || it + 1 == opts.max_iter {
            let r = &mtu - &(&v * sigma);
            residual = r.dot(&r).sqrt() / sigma;
            if residual <= opts.tol {
                // One more half-step so that (σ, v) is consistent with u.
                let s2 = mtu.dot(&mtu).sqrt();
                let v_new = &mtu / s2;
                let mv2 = m.apply(v_new.view());
                let sigma2 = mv2.dot(&mv2).sqrt();
                let u2 = &mv2 / sigma2;
                return Ok(SingularTriple { sigma: sigma2, u: u2, v: v_new });
            }
        }
        let n = mtu.dot(&mtu).sqrt();
        v = mtu / n;
    }
    Err(NumError::NonConvergence { residual, iterations: opts.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::svd_small;
    use crate::testutil::gaussian_matrix;
    use ndarray::array;

    #[test]
    fn diagonal() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let t = top_singular_pair(&m, &PowerOptions::default()).unwrap();
        assert!((t.sigma - 3.0).abs() < 1e-12);
        assert!((t.u[0].abs() - 1.0).abs() < 1e-10 && (t.v[0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn single_nonzero() {
        let m = array![[0.0, 2.0], [0.0, 0.0]];
        let t = top_singular_pair(&m, &PowerOptions::default()).unwrap();
        assert!((t.sigma - 2.0).abs() < 1e-12);
        assert!((t.u[0].abs() - 1.0).abs() < 1e-10 && (t.v[1].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix() {
        let m = ndarray::Array2::<f64>::zeros((3, 2));
        let t = top_singular_pair(&m, &PowerOptions::default()).unwrap();
        assert_eq!(t.sigma, 0.0);
        assert_eq!(t.u.dot(&t.u), 1.0);
    }

    #[test]
    fn random_matches_dense_svd() {
        let m = gaussian_matrix(6, 4, 42);
        let t = top_singular_pair(&m, &PowerOptions::default()).unwrap();
        let s = svd_small(&m).unwrap();
        assert!((t.sigma - s.s[0]).abs() <= 1e-8 * s.s[0]);
        let r = m.dot(&t.v) - &t.u * t.sigma;
        assert!(r.dot(&r).sqrt() <= 1e-10 * t.sigma);
        assert!((t.u.dot(&t.u) - 1.0).abs() < 1e-10 && (t.v.dot(&t.v) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reports_nonconvergence() {
        let m = gaussian_matrix(30, 30, 3);
        let opts = PowerOptions { tol: 1e-15, max_iter: 3, seed: 1 };
        assert!(matches!(top_singular_pair(&m, &opts), Err(NumError::NonConvergence { .. })));
    }
}
