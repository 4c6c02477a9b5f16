use ndarray::Array2;

use super::driver::GcgProblem;
use super::steps::{dense_segment, Segment};
use super::{GcgError, HSpec, PolarAtom};
use crate::losses::SmoothLoss;
use crate::numkit::frob_dot;

/// Polar oracle over dense points.
pub trait GaugeOracle {
    /// An atom approximately maximizing `⟨a, direction⟩` over the gauge's unit ball.
    fn polar_atom(&mut self, direction: &Array2<f64>) -> Result<PolarAtom<Array2<f64>>, GcgError>;
}

impl<O: GaugeOracle + ?Sized> GaugeOracle for &mut O {
    fn polar_atom(&mut self, direction: &Array2<f64>) -> Result<PolarAtom<Array2<f64>>, GcgError> {
        (**self).polar_atom(direction)
    }
}

/// Entrywise `ℓ1` gauge; atoms are signed coordinate matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct L1Oracle;

impl GaugeOracle for L1Oracle {
    fn polar_atom(&mut self, direction: &Array2<f64>) -> Result<PolarAtom<Array2<f64>>, GcgError> {
        let mut best = (0usize, 0usize);
        let mut best_abs = -1.0;
        for ((i, j), &v) in direction.indexed_iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = (i, j);
            }
        }
        let mut atom = Array2::zeros(direction.dim());
        atom[best] = if direction[best] < 0.0 { -1.0 } else { 1.0 };
        Ok(PolarAtom::exact(atom, best_abs.max(0.0)))
    }
}

/// Dense iterate; `atoms` counts the atoms that currently carry weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub w: Array2<f64>,
    pub atoms: usize,
}

/// A smooth loss paired with a polar oracle, iterating on dense points.
pub struct DenseModel<L, O> {
    loss: L,
    oracle: O,
    metric: Option<Box<dyn Fn(&Array2<f64>) -> f64>>,
}

impl<L: SmoothLoss, O: GaugeOracle> DenseModel<L, O> {
    pub fn new(loss: L, oracle: O) -> Self {
        Self { loss, oracle, metric: None }
    }

    pub fn with_metric(mut self, metric: impl Fn(&Array2<f64>) -> f64 + 'static) -> Self {
        self.metric = Some(Box::new(metric));
        self
    }

    pub fn loss(&self) -> &L {
        &self.loss
    }

    pub fn oracle_mut(&mut self) -> &mut O {
        &mut self.oracle
    }
}

impl<L: SmoothLoss, O: GaugeOracle> GcgProblem for DenseModel<L, O> {
    type State = DenseState;
    type Atom = Array2<f64>;
    type Grad = Array2<f64>;

    fn zero(&self) -> DenseState {
        DenseState { w: Array2::zeros(self.loss.shape()), atoms: 0 }
    }

    fn loss(&self, s: &DenseState) -> f64 {
        self.loss.value(&s.w)
    }

    fn gradient(&self, s: &DenseState) -> (f64, Array2<f64>) {
        self.loss.value_grad(&s.w)
    }

    fn polar(&mut self, grad: &Array2<f64>) -> Result<PolarAtom<Array2<f64>>, GcgError> {
        self.oracle.polar_atom(&grad.mapv(|g| -g))
    }

    fn atom_dot_grad(&self, a: &Array2<f64>, grad: &Array2<f64>) -> f64 {
        frob_dot(a, grad)
    }

    fn state_dot_grad(&self, s: &DenseState, grad: &Array2<f64>) -> f64 {
        frob_dot(&s.w, grad)
    }

    fn atom_dot_state(&self, a: &Array2<f64>, s: &DenseState) -> f64 {
        frob_dot(a, &s.w)
    }

    fn atom_sq_norm(&self, a: &Array2<f64>) -> f64 {
        frob_dot(a, a)
    }

    fn state_sq_norm(&self, s: &DenseState) -> f64 {
        frob_dot(&s.w, &s.w)
    }

    fn segment<'a>(&'a self, s: &'a DenseState, value: f64, grad: &Array2<f64>, a: &'a Array2<f64>) -> Segment<'a> {
        dense_segment(&self.loss, &s.w, value, grad, a)
    }

    fn step(&self, s: &DenseState, a: &Array2<f64>, eta: f64, theta: f64) -> DenseState {
        let mut w = &s.w * (1.0 - eta);
        w.scaled_add(theta, a);
        let kept = if eta >= 1.0 { 0 } else { s.atoms };
        DenseState { w, atoms: kept + usize::from(theta > 0.0) }
    }

    fn atom_count(&self, s: &DenseState) -> usize {
        s.atoms
    }

    fn lipschitz(&self) -> Option<f64> {
        self.loss.lipschitz_hint()
    }

    fn test_metric(&self, s: &DenseState) -> Option<f64> {
        self.metric.as_ref().map(|m| m(&s.w))
    }
}

/// Duality gap `⟨w, ∇ℓ(w)⟩ + f(w) + f*(−∇ℓ(w))` for the gauge regularizer.
///
/// `rho` is an upper bound on `κ(w)`. For `h = λ·id` the gap is infinite unless
/// `κ°(−∇ℓ(w)) ≤ λ` (up to the relative `slack`).
pub fn duality_gap<L: SmoothLoss, O: GaugeOracle>(
    w: &Array2<f64>,
    rho: f64,
    loss: &L,
    oracle: &mut O,
    h: HSpec,
    slack: f64,
) -> Result<f64, GcgError> {
    let grad = loss.grad(w);
    let polar = oracle.polar_atom(&grad.mapv(|g| -g))?;
    Ok(gap_from_parts(frob_dot(w, &grad), polar.polar_upper(), rho, h, slack))
}

/// Gap from its parts: `⟨w, ∇ℓ⟩`, an upper bound on `κ°(−∇ℓ)`, and `ρ ≥ κ(w)`.
pub fn gap_from_parts(w_dot_grad: f64, polar_upper: f64, rho: f64, h: HSpec, slack: f64) -> f64 {
    match h {
        HSpec::Linear { lambda } => {
            if polar_upper <= lambda * (1.0 + slack) {
                (w_dot_grad + lambda * rho).max(0.0)
            } else {
                f64::INFINITY
            }
        }
        HSpec::Indicator { zeta } => (w_dot_grad + zeta * polar_upper).max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::SquaredLoss;
    use ndarray::array;

    #[test]
    fn gap_on_scalar_box() {
        let loss = SquaredLoss::new(array![[0.0]]);
        let h = HSpec::Indicator { zeta: 1.0 };
        let g0 = duality_gap(&array![[0.0]], 0.0, &loss, &mut L1Oracle, h, 0.0).unwrap();
        assert_eq!(g0, 0.0);
        let g1 = duality_gap(&array![[1.0]], 1.0, &loss, &mut L1Oracle, h, 0.0).unwrap();
        assert!((g1 - 2.0).abs() < 1e-15);
        // F(1) − F* = ½
        assert!(g1 >= 0.5);
    }

    #[test]
    fn gap_infinite_outside_polar_ball() {
        let loss = SquaredLoss::new(array![[2.0]]);
        let g = duality_gap(&array![[0.0]], 0.0, &loss, &mut L1Oracle, HSpec::Linear { lambda: 1.0 }, 0.0).unwrap();
        assert!(g.is_infinite());
        let g = duality_gap(&array![[1.0]], 1.0, &loss, &mut L1Oracle, HSpec::Linear { lambda: 1.0 }, 0.0).unwrap();
        assert!(g.abs() < 1e-15);
    }
}
