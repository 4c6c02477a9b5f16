use ndarray::{concatenate, Array2, Axis};

use super::{ColumnNorm, FactorModel, FactorPolar, FactoredLoss, RankOneAtom};
use crate::gcg::{GcgError, GcgProblem, PolarAtom, Segment};
use crate::numkit::LinearOperator;

type ModelMetric = Box<dyn Fn(&FactorModel) -> f64>;

/// A factored loss with a rank-one polar oracle.
pub struct LowRankProblem<L, P> {
    loss: L,
    polar: P,
    norm: ColumnNorm,
    metric: Option<ModelMetric>,
}

impl<L: FactoredLoss, P: FactorPolar<L::Grad>> LowRankProblem<L, P> {
    pub fn new(loss: L, polar: P, norm: ColumnNorm) -> Self {
        Self { loss, polar, norm, metric: None }
    }

    pub fn with_metric(mut self, metric: impl Fn(&FactorModel) -> f64 + 'static) -> Self {
        self.metric = Some(Box::new(metric));
        self
    }

    pub fn factored_loss(&self) -> &L {
        &self.loss
    }

    pub fn norm(&self) -> ColumnNorm {
        self.norm
    }
}

impl<L: FactoredLoss, P: FactorPolar<L::Grad>> GcgProblem for LowRankProblem<L, P> {
    type State = FactorModel;
    type Atom = RankOneAtom;
    type Grad = L::Grad;

    fn zero(&self) -> FactorModel {
        let (n, m) = self.loss.shape();
        FactorModel::empty(n, m, self.norm)
    }

    fn loss(&self, s: &FactorModel) -> f64 {
        self.loss.value_uv(&s.u, &s.v)
    }

    fn gradient(&self, s: &FactorModel) -> (f64, L::Grad) {
        self.loss.grad_w(&s.u, &s.v)
    }

    fn polar(&mut self, grad: &L::Grad) -> Result<PolarAtom<RankOneAtom>, GcgError> {
        self.polar.polar_neg(grad)
    }

    fn atom_dot_grad(&self, a: &RankOneAtom, grad: &L::Grad) -> f64 {
        grad.bilinear(a.u.view(), a.v.view())
    }

    fn state_dot_grad(&self, s: &FactorModel, grad: &L::Grad) -> f64 {
        (0..s.rank()).map(|i| grad.bilinear(s.u.column(i), s.v.row(i))).sum()
    }

    fn atom_dot_state(&self, a: &RankOneAtom, s: &FactorModel) -> f64 {
        a.u.dot(&s.u).dot(&s.v.dot(&a.v))
    }

    fn atom_sq_norm(&self, a: &RankOneAtom) -> f64 {
        a.u.dot(&a.u) * a.v.dot(&a.v)
    }

    fn state_sq_norm(&self, s: &FactorModel) -> f64 {
        let gu = s.u.t().dot(&s.u);
        let gv = s.v.dot(&s.v.t());
        (&gu * &gv).sum()
    }

    fn segment<'a>(&'a self, s: &'a FactorModel, value: f64, grad: &L::Grad, a: &'a RankOneAtom) -> Segment<'a> {
        self.loss.segment(&s.u, &s.v, value, grad, a)
    }

    /// Splits the new scale between the factors: `U ← [√(1−η)U, √θ u]`, `V ← [√(1−η)V; √θ vᵀ]`.
    fn step(&self, s: &FactorModel, a: &RankOneAtom, eta: f64, theta: f64) -> FactorModel {
        let (n, m) = s.shape();
        let keep = (1.0 - eta).max(0.0).sqrt();
        let (mut u, mut v) = if eta >= 1.0 {
            (Array2::zeros((n, 0)), Array2::zeros((0, m)))
        } else {
            (&s.u * keep, &s.v * keep)
        };
        if theta > 0.0 {
            let r = theta.sqrt();
            let col = (&a.u * r).insert_axis(Axis(1));
            let row = (&a.v * r).insert_axis(Axis(0));
            u = concatenate![Axis(1), u, col];
            v = concatenate![Axis(0), v, row];
        }
        FactorModel { u, v, rho: (1.0 - eta) * s.rho + theta, norm: s.norm }
    }

    fn atom_count(&self, s: &FactorModel) -> usize {
        s.rank()
    }

    fn lipschitz(&self) -> Option<f64> {
        self.loss.lipschitz_hint()
    }

    fn test_metric(&self, s: &FactorModel) -> Option<f64> {
        self.metric.as_ref().map(|m| m(s))
    }
}
