use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1};

use super::NumError;

/// Anything that can be applied to a vector and transposed-applied.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `M x`
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64>;
    /// `Mᵀ y`
    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64>;

    /// `uᵀ M v`
    fn bilinear(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
        u.dot(&self.apply(v))
    }
}

impl LinearOperator for Array2<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.dot(&x)
    }
    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.t().dot(&y)
    }
}

/// Sparse matrix stored as validated (row, col, value) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletMatrix {
    rows: usize,
    cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl TripletMatrix {
    pub fn new(rows: usize, cols: usize, triples: Vec<(usize, usize, f64)>) -> Result<Self, NumError> {
        let mut seen = HashSet::with_capacity(triples.len());
        let mut row_idx = Vec::with_capacity(triples.len());
        let mut col_idx = Vec::with_capacity(triples.len());
        let mut values = Vec::with_capacity(triples.len());
        for (row, col, value) in triples {
            if row >= rows || col >= cols {
                return Err(NumError::IndexOutOfRange { row, col, rows, cols });
            }
            if !value.is_finite() {
                return Err(NumError::NonFinite { row, col });
            }
            if !seen.insert((row, col)) {
                return Err(NumError::DuplicateEntry { row, col });
            }
            row_idx.push(row);
            col_idx.push(col);
            values.push(value);
        }
        Ok(Self { rows, cols, row_idx, col_idx, values })
    }

    /// Same pattern as `self` with new values; the caller guarantees the length.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            row_idx: self.row_idx.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.row_idx
            .iter()
            .zip(&self.col_idx)
            .zip(&self.values)
            .map(|((&i, &j), &x)| (i, j, x))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (i, j, x) in self.iter() {
            out[[i, j]] = x;
        }
        out
    }

    /// Values of a dense matrix sampled on this pattern.
    pub fn sample(&self, dense: &Array2<f64>) -> Vec<f64> {
        self.iter().map(|(i, j, _)| dense[[i, j]]).collect()
    }
}

impl LinearOperator for TripletMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut y = Array1::zeros(self.rows);
        for (i, j, v) in self.iter() {
            y[i] += v * x[j];
        }
        y
    }
    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let mut x = Array1::zeros(self.cols);
        for (i, j, v) in self.iter() {
            x[j] += v * y[i];
        }
        x
    }
    fn bilinear(&self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
        self.iter().map(|(i, j, x)| u[i] * x * v[j]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_triples() {
        assert!(matches!(
            TripletMatrix::new(2, 2, vec![(2, 0, 1.0)]),
            Err(NumError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            TripletMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]),
            Err(NumError::DuplicateEntry { .. })
        ));
        assert!(matches!(
            TripletMatrix::new(2, 2, vec![(0, 1, f64::NAN)]),
            Err(NumError::NonFinite { .. })
        ));
    }

    #[test]
    fn sparse_products_match_dense() {
        let t = TripletMatrix::new(2, 3, vec![(0, 1, 2.0), (1, 2, -1.0), (1, 0, 0.5)]).unwrap();
        let d = t.to_dense();
        let x = array![1.0, 2.0, 3.0];
        let y = array![-1.0, 4.0];
        assert_eq!(t.apply(x.view()), d.dot(&x));
        assert_eq!(t.apply_t(y.view()), d.t().dot(&y));
        assert!((t.bilinear(y.view(), x.view()) - y.dot(&d.dot(&x))).abs() < 1e-14);
    }
}
