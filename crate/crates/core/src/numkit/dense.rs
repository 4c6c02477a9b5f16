use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use super::NumError;

/// Largest `min(rows, cols)` accepted by the dense decompositions.
pub const SVD_DIM_GUARD: usize = 256;

/// Thin SVD `M = U diag(s) Vt` with singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.u * &self.s;
        scaled.dot(&self.vt)
    }
}

/// Symmetric eigendecomposition with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Array2<f64>,
}

fn to_na(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Full thin SVD of a small dense matrix.
pub fn svd_small(m: &Array2<f64>) -> Result<Svd, NumError> {
    let (rows, cols) = m.dim();
    let k = rows.min(cols);
    if k > SVD_DIM_GUARD {
        return Err(NumError::DimensionTooLarge { dim: k, guard: SVD_DIM_GUARD });
    }
    if k == 0 {
        return Ok(Svd {
            u: Array2::zeros((rows, 0)),
            s: Array1::zeros(0),
            vt: Array2::zeros((0, cols)),
        });
    }
    let svd = to_na(m).svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vt");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i].max(0.0)));
    let u = Array2::from_shape_fn((rows, k), |(r, c)| u[(r, order[c])]);
    let vt = Array2::from_shape_fn((k, cols), |(r, c)| vt[(order[r], c)]);
    Ok(Svd { u, s, vt })
}

/// `‖M‖_sp`: dense SVD within the guard, power iteration beyond it.
pub fn spectral_norm(m: &Array2<f64>) -> Result<f64, NumError> {
    if m.nrows().min(m.ncols()) <= SVD_DIM_GUARD {
        Ok(svd_small(m)?.s.first().copied().unwrap_or(0.0))
    } else {
        Ok(super::top_singular_pair(m, &super::PowerOptions::default())?.sigma)
    }
}

/// Eigendecomposition of a symmetric matrix (the upper and lower triangles are averaged).
pub fn sym_eigen(a: &Array2<f64>) -> Result<SymEigen, NumError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(NumError::ShapeMismatch { expected: (rows, rows), got: (rows, cols) });
    }
    if rows > SVD_DIM_GUARD {
        return Err(NumError::DimensionTooLarge { dim: rows, guard: SVD_DIM_GUARD });
    }
    let sym = DMatrix::from_fn(rows, rows, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = from_na(&eig.eigenvectors);
    let vectors = Array2::from_shape_fn((rows, rows), |(r, c)| vecs[[r, order[c]]]);
    Ok(SymEigen { values, vectors })
}

/// Frobenius inner product.
pub fn frob_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frob_norm(a: &Array2<f64>) -> f64 {
    frob_dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::gaussian_matrix;
    use ndarray::array;

    #[test]
    fn identity_and_zero() {
        let s = svd_small(&Array2::eye(3)).unwrap();
        assert_eq!(s.s.to_vec(), vec![1.0, 1.0, 1.0]);
        let z = svd_small(&Array2::zeros((2, 2))).unwrap();
        assert_eq!(z.s.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn random_reconstruction() {
        let m = gaussian_matrix(5, 7, 1);
        let s = svd_small(&m).unwrap();
        let err = frob_norm(&(s.reconstruct() - &m));
        assert!(err <= 1e-10 * frob_norm(&m), "residual {err}");
        for w in s.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let utu = s.u.t().dot(&s.u);
        let vvt = s.vt.dot(&s.vt.t());
        assert!(frob_norm(&(utu - Array2::<f64>::eye(5))) < 1e-12);
        assert!(frob_norm(&(vvt - Array2::<f64>::eye(5))) < 1e-12);
    }

    #[test]
    fn guard_enforced() {
        let m = Array2::zeros((257, 300));
        assert!(matches!(svd_small(&m), Err(NumError::DimensionTooLarge { .. })));
    }

    #[test]
    fn eigen_sorted_ascending() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 3.0).abs() < 1e-14);
        let v = e.vectors.column(1);
        assert!((v[0].abs() - v[1].abs()).abs() < 1e-12);
    }
}
