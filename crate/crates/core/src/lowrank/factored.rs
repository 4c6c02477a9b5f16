use ndarray::Array2;

use super::RankOneAtom;
use crate::gcg::{Quad2, Segment};
use crate::losses::{MaskedSquared, SmoothLoss};
use crate::numkit::{frob_dot, LinearOperator, TripletMatrix};

/// A loss evaluated at `W = UV` without requiring `W` to be formed.
pub trait FactoredLoss {
    /// Gradient with respect to `W`, kept in whatever form is cheap.
    type Grad: LinearOperator;

    fn shape(&self) -> (usize, usize);

    fn value_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> f64;

    fn grad_w(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Self::Grad);

    /// Value with gradients for `U` and `V`.
    fn value_grad_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>);

    /// `(η, θ) ↦ ℓ((1−η)UV + θ·u vᵀ)`
    fn segment<'a>(
        &'a self,
        u: &'a Array2<f64>,
        v: &'a Array2<f64>,
        value: f64,
        grad: &Self::Grad,
        atom: &'a RankOneAtom,
    ) -> Segment<'a>;

    fn lipschitz_hint(&self) -> Option<f64>;

    /// Hessian with respect to `W` at `UV`, applied to `d`.
    fn hvp_w(&self, _u: &Array2<f64>, _v: &Array2<f64>, _d: &Array2<f64>) -> Option<Array2<f64>> {
        None
    }
}

impl FactoredLoss for MaskedSquared {
    type Grad = TripletMatrix;

    fn shape(&self) -> (usize, usize) {
        SmoothLoss::shape(self)
    }

    fn value_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> f64 {
        self.value_factored(u, v)
    }

    fn grad_w(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, TripletMatrix) {
        self.value_grad_factored(u, v)
    }

    fn value_grad_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
        MaskedSquared::value_grad_uv(self, u, v)
    }

    fn segment<'a>(
        &'a self,
        u: &'a Array2<f64>,
        v: &'a Array2<f64>,
        value: f64,
        grad: &TripletMatrix,
        atom: &'a RankOneAtom,
    ) -> Segment<'a> {
        // The Hessian is the mask projection, so the segment is an exact quadratic.
        let p = self.predict_factored(u, v);
        let q = self.rank_one_on_mask(atom.u.view(), atom.v.view());
        let r = grad.values();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Segment::Quadratic(Quad2::from_taylor(value, dot(r, &p), dot(r, &q), dot(&p, &p), dot(&p, &q), dot(&q, &q)))
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Any dense smooth loss, evaluated by forming `W = UV`.
#[derive(Debug, Clone)]
pub struct Materialized<L>(pub L);

impl<L: SmoothLoss> FactoredLoss for Materialized<L> {
    type Grad = Array2<f64>;

    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn value_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> f64 {
        self.0.value(&u.dot(v))
    }

    fn grad_w(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>) {
        self.0.value_grad(&u.dot(v))
    }

    fn value_grad_uv(&self, u: &Array2<f64>, v: &Array2<f64>) -> (f64, Array2<f64>, Array2<f64>) {
        let (value, g) = self.0.value_grad(&u.dot(v));
        (value, g.dot(&v.t()), u.t().dot(&g))
    }

    fn segment<'a>(
        &'a self,
        u: &'a Array2<f64>,
        v: &'a Array2<f64>,
        value: f64,
        grad: &Array2<f64>,
        atom: &'a RankOneAtom,
    ) -> Segment<'a> {
        let w = u.dot(v);
        let a = outer(&atom.u, &atom.v);
        if self.0.is_quadratic() {
            if let (Some(hw), Some(ha)) = (self.0.hvp(&w, &w), self.0.hvp(&w, &a)) {
                return Segment::Quadratic(Quad2::from_taylor(
                    value,
                    frob_dot(grad, &w),
                    frob_dot(grad, &a),
                    frob_dot(&w, &hw),
                    frob_dot(&w, &ha),
                    frob_dot(&a, &ha),
                ));
            }
        }
        Segment::General(Box::new(move |eta, theta| {
            let mut p = &w * (1.0 - eta);
            p.scaled_add(theta, &a);
            self.0.value(&p)
        }))
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        self.0.lipschitz_hint()
    }

    fn hvp_w(&self, u: &Array2<f64>, v: &Array2<f64>, d: &Array2<f64>) -> Option<Array2<f64>> {
        self.0.hvp(&u.dot(v), d)
    }
}

pub(crate) fn outer(u: &ndarray::Array1<f64>, v: &ndarray::Array1<f64>) -> Array2<f64> {
    let col = u.view().insert_axis(ndarray::Axis(1));
    let row = v.view().insert_axis(ndarray::Axis(0));
    col.dot(&row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::SquaredLoss;
    use crate::testutil::gaussian_matrix;

    fn mask_loss() -> (MaskedSquared, Array2<f64>) {
        let x = gaussian_matrix(5, 4, 1);
        let triples = x
            .indexed_iter()
            .filter(|((i, j), _)| (i + 2 * j) % 3 != 0)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        (MaskedSquared::from_triplets(TripletMatrix::new(5, 4, triples).unwrap()), x)
    }

    #[test]
    fn masked_segment_matches_direct_evaluation() {
        let (loss, _) = mask_loss();
        let u = gaussian_matrix(5, 2, 2);
        let v = gaussian_matrix(2, 4, 3);
        let atom = RankOneAtom { u: gaussian_matrix(5, 1, 4).column(0).to_owned(), v: gaussian_matrix(4, 1, 5).column(0).to_owned() };
        let (value, grad) = loss.grad_w(&u, &v);
        let seg = FactoredLoss::segment(&loss, &u, &v, value, &grad, &atom);
        let w = u.dot(&v);
        let a = outer(&atom.u, &atom.v);
        for (eta, theta) in [(0.0, 0.0), (0.3, 0.7), (1.0, 2.0)] {
            let mut p = &w * (1.0 - eta);
            p.scaled_add(theta, &a);
            let direct = SmoothLoss::value(&loss, &p);
            assert!((seg.eval(eta, theta) - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn materialized_factor_gradients() {
        let target = gaussian_matrix(4, 3, 9);
        let loss = Materialized(SquaredLoss::new(target));
        let u = gaussian_matrix(4, 2, 10);
        let v = gaussian_matrix(2, 3, 11);
        let (_, gu, gv) = loss.value_grad_uv(&u, &v);
        let fd_u = crate::testutil::fd_grad(|x| loss.value_uv(x, &v), &u, 1e-6);
        let fd_v = crate::testutil::fd_grad(|x| loss.value_uv(&u, x), &v, 1e-6);
        assert!(crate::testutil::rel_err(&gu, &fd_u) < 1e-7);
        assert!(crate::testutil::rel_err(&gv, &fd_v) < 1e-7);
    }
}
