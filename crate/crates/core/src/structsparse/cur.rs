use ndarray::Array2;

use super::{solve_structured_gcg, GroupStructure, QExponent, StructError, StructuredOptions, StructuredOutput};
use crate::losses::SmoothLoss;
use crate::numkit::spectral_norm;

/// `½‖X − XWX‖²_F` over `W ∈ ℝ^{d×n}` for `X ∈ ℝ^{n×d}`.
#[derive(Debug, Clone)]
pub struct CurLoss {
    x: Array2<f64>,
    lipschitz: f64,
}

impl CurLoss {
    pub fn new(x: Array2<f64>) -> Self {
        let s = spectral_norm(&x).expect("spectral norm of the data");
        Self { lipschitz: s.powi(4), x }
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.x
    }

    fn residual(&self, w: &Array2<f64>) -> Array2<f64> {
        &self.x - &self.x.dot(w).dot(&self.x)
    }
}

impl SmoothLoss for CurLoss {
    fn shape(&self) -> (usize, usize) {
        (self.x.ncols(), self.x.nrows())
    }

    fn value(&self, w: &Array2<f64>) -> f64 {
        0.5 * self.residual(w).iter().map(|r| r * r).sum::<f64>()
    }

    fn value_grad(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let r = self.residual(w);
        let grad = -self.x.t().dot(&r).dot(&self.x.t());
        (0.5 * r.iter().map(|v| v * v).sum::<f64>(), grad)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn hvp(&self, _w: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        Some(self.x.t().dot(&self.x.dot(d).dot(&self.x)).dot(&self.x.t()))
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

/// A row or column of the data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurIndex {
    Row(usize),
    Col(usize),
}

#[derive(Debug, Clone)]
pub struct CurResult {
    /// `d × n`; row `a` of `W` weighs column `a` of `X`, column `b` weighs row `b`.
    pub w: Array2<f64>,
    pub output: StructuredOutput,
    /// Data rows and columns touched by some atom support.
    pub selected_rows: Vec<usize>,
    pub selected_cols: Vec<usize>,
    /// `Σ_τ σ_τ Σ |coeff|` over each data row and column.
    pub row_mass: Vec<f64>,
    pub col_mass: Vec<f64>,
}

impl CurResult {
    /// The `k` heaviest rows and columns by atom mass, heaviest first.
    pub fn top_by_mass(&self, k: usize) -> Vec<CurIndex> {
        let mut all: Vec<(f64, CurIndex)> = self
            .row_mass
            .iter()
            .enumerate()
            .map(|(i, &m)| (m, CurIndex::Row(i)))
            .chain(self.col_mass.iter().enumerate().map(|(j, &m)| (m, CurIndex::Col(j))))
            .filter(|(m, _)| *m > 0.0)
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }
}

/// Row and column selection by `min ½‖X − XWX‖² + λκ(W)`, where `κ` is the
/// `q = 1` gauge of the unit-cost row and column groups of `W`.
pub fn solve_cur(x: &Array2<f64>, lambda: f64, opts: &StructuredOptions) -> Result<CurResult, StructError> {
    let (n, d) = x.dim();
    let loss = CurLoss::new(x.clone());
    let gs = GroupStructure::rows_and_columns(d, n);
    let output = solve_structured_gcg(&loss, &gs, lambda, QExponent::ONE, opts)?;
    let mut row_mass = vec![0.0; n];
    let mut col_mass = vec![0.0; d];
    let mut row_hit = vec![false; n];
    let mut col_hit = vec![false; d];
    for (atom, &sigma) in output.model.atoms.iter().zip(&output.model.weights) {
        for (&p, &c) in atom.support.iter().zip(&atom.coeffs) {
            let (a, b) = (p / n, p % n);
            col_mass[a] += sigma * c.abs();
            row_mass[b] += sigma * c.abs();
            col_hit[a] = true;
            row_hit[b] = true;
        }
    }
    let pick = |hits: &[bool]| hits.iter().enumerate().filter(|(_, h)| **h).map(|(i, _)| i).collect();
    Ok(CurResult { w: output.w.clone(), selected_rows: pick(&row_hit), selected_cols: pick(&col_hit), row_mass, col_mass, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcg::SolverOptions;
    use crate::testutil::gaussian_matrix;

    #[test]
    fn gradient_check() {
        crate::losses::checks::gradient_check(&CurLoss::new(gaussian_matrix(5, 4, 1)), 5, 0.3, 1e-6);
    }

    #[test]
    fn large_lambda_selects_nothing() {
        let x = gaussian_matrix(6, 5, 2);
        let out = solve_cur(&x, 1e6, &StructuredOptions::default()).unwrap();
        assert!(out.output.model.is_empty());
        assert!(out.selected_rows.is_empty() && out.selected_cols.is_empty());
    }

    #[test]
    fn identity_is_fit_as_lambda_vanishes() {
        let x = Array2::eye(4);
        let opts = StructuredOptions { solver: SolverOptions { max_iters: 100, ..Default::default() }, ..Default::default() };
        let f0 = CurLoss::new(x.clone()).value(&Array2::zeros((4, 4)));
        let out = solve_cur(&x, 1e-4, &opts).unwrap();
        let last = out.output.trace.last().unwrap().objective;
        assert!(last < 1e-2 * f0, "{last} vs {f0}");
    }
}
