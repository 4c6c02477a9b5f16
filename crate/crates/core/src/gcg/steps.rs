use ndarray::Array2;

use super::HSpec;
use crate::losses::SmoothLoss;
use crate::numkit::{frob_dot, golden_section_min};

/// `t = 0 ↦ 1`, then `2/(t+2)`.
pub fn step_open_loop(t: usize) -> f64 {
    2.0 / (t as f64 + 2.0)
}

/// `min(gap / (L·dist²), 1)`, with `0` for a zero gap and `1` for a zero distance.
pub fn step_adaptive(gap: f64, lipschitz: f64, dist_sq: f64) -> f64 {
    assert!(lipschitz > 0.0 && dist_sq >= 0.0);
    if gap <= 0.0 {
        0.0
    } else if dist_sq == 0.0 {
        1.0
    } else {
        (gap / (lipschitz * dist_sq)).min(1.0)
    }
}

/// `c0 + ce·η + ct·θ + ½aee·η² + aet·ηθ + ½att·θ²`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad2 {
    pub c0: f64,
    pub ce: f64,
    pub ct: f64,
    pub aee: f64,
    pub aet: f64,
    pub att: f64,
}

impl Quad2 {
    pub fn eval(&self, eta: f64, theta: f64) -> f64 {
        self.c0
            + self.ce * eta
            + self.ct * theta
            + 0.5 * self.aee * eta * eta
            + self.aet * eta * theta
            + 0.5 * self.att * theta * theta
    }

    /// Adds `λ((1−η)ρ + θ)`.
    pub fn plus_linear_h(mut self, rho: f64, lambda: f64) -> Self {
        self.c0 += lambda * rho;
        self.ce -= lambda * rho;
        self.ct += lambda;
        self
    }

    /// Coefficients of `ℓ(w + θa − ηw)` from the value, gradient and Hessian products at `w`.
    pub fn from_taylor(value: f64, g_w: f64, g_a: f64, w_hw: f64, w_ha: f64, a_ha: f64) -> Self {
        Self { c0: value, ce: -g_w, ct: g_a, aee: w_hw, aet: -w_ha, att: a_ha }
    }
}

/// Feasible set for `(η, θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// `η ∈ [0, 1]`, `θ ≥ 0`.
    Box,
    /// `η ∈ [0, 1]`, `0 ≤ θ ≤ ηζ`.
    Triangle { zeta: f64 },
}

impl Region {
    fn for_h(h: HSpec) -> Self {
        match h {
            HSpec::Linear { .. } => Self::Box,
            HSpec::Indicator { zeta } => Self::Triangle { zeta },
        }
    }
}

/// The loss along the segment `(η, θ) ↦ ℓ((1−η)w + θa)`.
pub enum Segment<'a> {
    Quadratic(Quad2),
    General(Box<dyn Fn(f64, f64) -> f64 + 'a>),
}

impl Segment<'_> {
    pub fn eval(&self, eta: f64, theta: f64) -> f64 {
        match self {
            Self::Quadratic(q) => q.eval(eta, theta),
            Self::General(f) => f(eta, theta),
        }
    }
}

/// Minimizer of `c + b·x + ½a·x²` over `[lo, hi]` (`hi` may be infinite).
fn quad_1d(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> f64 {
    let at = |x: f64| c + b * x + 0.5 * a * x * x;
    if a > 0.0 {
        (-b / a).clamp(lo, hi)
    } else if hi.is_finite() {
        if at(lo) <= at(hi) {
            lo
        } else {
            hi
        }
    } else {
        // Degenerate flat or concave direction along an unbounded edge.
        lo
    }
}

/// Exact minimizer of a convex quadratic over the region.
pub fn minimize_quadratic(q: &Quad2, region: Region) -> (f64, f64) {
    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(6);
    let det = q.aee * q.att - q.aet * q.aet;
    let scale = (q.aee * q.att).abs().max(q.aet * q.aet);
    if det > 1e-14 * scale && det > 0.0 {
        let eta = (-q.ce * q.att + q.ct * q.aet) / det;
        let theta = (-q.ct * q.aee + q.ce * q.aet) / det;
        let inside = match region {
            Region::Box => (0.0..=1.0).contains(&eta) && theta >= 0.0,
            Region::Triangle { zeta } => (0.0..=1.0).contains(&eta) && theta >= 0.0 && theta <= eta * zeta,
        };
        if inside {
            candidates.push((eta, theta));
        }
    }
    // θ = 0 edge.
    candidates.push((quad_1d(q.aee, q.ce, q.c0, 0.0, 1.0), 0.0));
    // η = 1 edge.
    let theta_hi = match region {
        Region::Box => f64::INFINITY,
        Region::Triangle { zeta } => zeta,
    };
    candidates.push((1.0, quad_1d(q.att, q.ct + q.aet, q.eval(1.0, 0.0), 0.0, theta_hi)));
    match region {
        Region::Box => {
            candidates.push((0.0, quad_1d(q.att, q.ct, q.c0, 0.0, f64::INFINITY)));
        }
        Region::Triangle { zeta } => {
            let a = q.aee + 2.0 * q.aet * zeta + q.att * zeta * zeta;
            let eta = quad_1d(a, q.ce + q.ct * zeta, q.c0, 0.0, 1.0);
            candidates.push((eta, eta * zeta));
        }
    }
    let (_, eta, theta) = candidates
        .into_iter()
        .map(|(e, t)| (q.eval(e, t), e, t))
        .fold((f64::INFINITY, 0.0, 0.0), |best, c| if c.0 < best.0 { c } else { best });
    (eta, theta)
}

const GOLDEN_TOL: f64 = 1e-10;

/// `argmin_{x ≥ 0} f(x)` for convex `f`, bracketing from a scale hint.
fn argmin_halfline(f: &dyn Fn(f64) -> f64, hint: f64) -> f64 {
    let f0 = f(0.0);
    // Decreases below round-off are not evidence of a descent direction.
    let below = |x: f64| f(x) < f0 - 4.0 * f64::EPSILON * f0.abs();
    let scale = if hint > 0.0 { 2.0 * hint } else { 1.0 };
    let mut hi = scale;
    if below(hi) {
        let mut fh = f(hi);
        for _ in 0..200 {
            let f2 = f(2.0 * hi);
            if !(f2 < fh) {
                break;
            }
            hi *= 2.0;
            fh = f2;
        }
        hi *= 2.0;
    } else {
        loop {
            hi *= 0.5;
            if hi < 1e-14 * scale {
                return 0.0;
            }
            if below(hi) {
                hi *= 2.0;
                break;
            }
        }
    }
    golden_section_min(f, 0.0, hi, GOLDEN_TOL * hi).x
}

fn argmin_interval(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if hi - lo <= 0.0 {
        return lo;
    }
    golden_section_min(f, lo, hi, GOLDEN_TOL * (hi - lo).max(1e-300)).x
}

/// Nested search: `η ↦ min_θ φ(η, θ)` is convex, so golden section on `η`
/// with an inner one-dimensional search is safe. Coordinate sweeps are not:
/// they stall on the `θ = 0` edge and on the slanted edge of the triangle.
fn nested(phi: &dyn Fn(f64, f64) -> f64, region: Region) -> (f64, f64) {
    let inner = |e: f64| match region {
        Region::Box => argmin_halfline(&|t| phi(e, t), 0.0),
        Region::Triangle { zeta } => argmin_interval(&|t| phi(e, t), 0.0, e * zeta),
    };
    let eta = argmin_interval(&|e| phi(e, inner(e)), 0.0, 1.0);
    let mut best = (eta, inner(eta));
    let at_one = (1.0, inner(1.0));
    if phi(at_one.0, at_one.1) < phi(best.0, best.1) {
        best = at_one;
    }
    if phi(best.0, best.1) <= phi(0.0, 0.0) {
        best
    } else {
        (0.0, 0.0)
    }
}

/// Minimizes `ℓ((1−η)w + θa) + (1−η)h(ρ) + ηh(θ/η)` over feasible `(η, θ)`.
///
/// The result never does worse than `(0, 0)` or the best `θ` at `η = 1`.
pub fn joint_search(segment: &Segment<'_>, rho: f64, h: HSpec) -> (f64, f64) {
    let region = Region::for_h(h);
    match (segment, h) {
        (Segment::Quadratic(q), HSpec::Linear { lambda }) => minimize_quadratic(&q.plus_linear_h(rho, lambda), region),
        (Segment::Quadratic(q), HSpec::Indicator { .. }) => minimize_quadratic(q, region),
        (Segment::General(f), HSpec::Linear { lambda }) => {
            nested(&|e, t| f(e, t) + lambda * ((1.0 - e) * rho + t), region)
        }
        (Segment::General(f), HSpec::Indicator { .. }) => nested(&|e, t| f(e, t), region),
    }
}

/// Segment of a dense loss, quadratic when the loss says so.
pub(crate) fn dense_segment<'a, L: SmoothLoss>(
    loss: &'a L,
    w: &'a Array2<f64>,
    value: f64,
    grad: &Array2<f64>,
    a: &'a Array2<f64>,
) -> Segment<'a> {
    if loss.is_quadratic() {
        if let (Some(hw), Some(ha)) = (loss.hvp(w, w), loss.hvp(w, a)) {
            return Segment::Quadratic(Quad2::from_taylor(
                value,
                frob_dot(grad, w),
                frob_dot(grad, a),
                frob_dot(w, &hw),
                frob_dot(w, &ha),
                frob_dot(a, &ha),
            ));
        }
    }
    Segment::General(Box::new(move |eta, theta| {
        let mut p = w * (1.0 - eta);
        p.scaled_add(theta, a);
        loss.value(&p)
    }))
}

/// Joint `(η, θ)` for a dense point `w` with bound `ρ` and atom `a`.
pub fn joint_eta_theta<L: SmoothLoss>(loss: &L, w: &Array2<f64>, rho: f64, a: &Array2<f64>, h: HSpec) -> (f64, f64) {
    let (value, grad) = loss.value_grad(w);
    joint_search(&dense_segment(loss, w, value, &grad, a), rho, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{SmoothedL1, SquaredLoss};
    use crate::numkit::frob_norm;
    use crate::testutil::gaussian_matrix;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn open_loop_values() {
        assert_eq!(step_open_loop(0), 1.0);
        assert_eq!(step_open_loop(2), 0.5);
        assert!((step_open_loop(98) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn adaptive_values() {
        assert_eq!(step_adaptive(0.0, 1.0, 3.0), 0.0);
        assert_eq!(step_adaptive(2.0, 1.0, 4.0), 0.5);
        assert_eq!(step_adaptive(10.0, 1.0, 1.0), 1.0);
        assert_eq!(step_adaptive(1.0, 1.0, 0.0), 1.0);
    }

    #[test]
    fn soft_threshold_from_zero() {
        let c = array![[3.0, -4.0]];
        let loss = SquaredLoss::new(c.clone());
        let a = &c / frob_norm(&c);
        let w = Array2::zeros((1, 2));
        for lambda in [0.5, 2.0, 4.9] {
            let (_, theta) = joint_eta_theta(&loss, &w, 0.0, &a, HSpec::Linear { lambda });
            assert!((theta - (5.0 - lambda)).abs() < 1e-12);
        }
        let (_, theta) = joint_eta_theta(&loss, &w, 0.0, &a, HSpec::Linear { lambda: 6.0 });
        assert_eq!(theta, 0.0);
    }

    fn grid_min(phi: &dyn Fn(f64, f64) -> f64, theta_max: f64, triangle: Option<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..50 {
            for j in 0..50 {
                let e = i as f64 / 49.0;
                let t = theta_max * j as f64 / 49.0;
                if let Some(z) = triangle {
                    if t > e * z {
                        continue;
                    }
                }
                best = best.min(phi(e, t));
            }
        }
        best
    }

    proptest! {
        #[test]
        fn quadratic_beats_grid(seed in 0u64..500, lambda in 0.05f64..3.0) {
            let target = gaussian_matrix(4, 3, seed);
            let loss = SquaredLoss::new(target);
            let w = gaussian_matrix(4, 3, seed + 1) * 0.5;
            let a0 = gaussian_matrix(4, 3, seed + 2);
            let a = &a0 / frob_norm(&a0);
            let rho = frob_norm(&w) * 1.3;
            let h = HSpec::Linear { lambda };
            let (e, t) = joint_eta_theta(&loss, &w, rho, &a, h);
            let phi = |e: f64, t: f64| {
                let mut p = &w * (1.0 - e);
                p.scaled_add(t, &a);
                loss.value(&p) + lambda * ((1.0 - e) * rho + t)
            };
            let theta_max = 2.0 * (t + 1.0);
            prop_assert!(phi(e, t) <= grid_min(&phi, theta_max, None) + 1e-8);
        }

        #[test]
        fn general_path_beats_grid_and_anchors(seed in 0u64..200, zeta in 0.5f64..3.0) {
            let target = gaussian_matrix(3, 3, seed) * 2.0;
            let loss = SmoothedL1::new(target, 0.05).unwrap();
            let w = gaussian_matrix(3, 3, seed + 7) * 0.3;
            let a0 = gaussian_matrix(3, 3, seed + 9);
            let a = &a0 / frob_norm(&a0);
            for h in [HSpec::Linear { lambda: 0.3 }, HSpec::Indicator { zeta }] {
                let rho = frob_norm(&w);
                let (e, t) = joint_eta_theta(&loss, &w, rho, &a, h);
                let phi = |e: f64, t: f64| {
                    let mut p = &w * (1.0 - e);
                    p.scaled_add(t, &a);
                    loss.value(&p) + match h { HSpec::Linear { lambda } => lambda * ((1.0 - e) * rho + t), _ => 0.0 }
                };
                let (tri, tmax) = match h { HSpec::Indicator { zeta } => (Some(zeta), zeta), _ => (None, 2.0 * (t + 1.0)) };
                if let Some(z) = tri { prop_assert!(t <= e * z + 1e-12); }
                prop_assert!(phi(e, t) <= phi(0.0, 0.0) + 1e-12);
                prop_assert!(phi(e, t) <= grid_min(&phi, tmax, tri) + 1e-6, "{:?} e={} t={} phi={} grid={}", h, e, t, phi(e, t), grid_min(&phi, tmax, tri));
            }
        }
    }

    #[test]
    fn triangle_quadratic_respects_constraint() {
        let q = Quad2 { c0: 0.0, ce: 0.0, ct: -10.0, aee: 1.0, aet: 0.0, att: 1.0 };
        let (e, t) = minimize_quadratic(&q, Region::Triangle { zeta: 2.0 });
        assert!(t <= 2.0 * e + 1e-15);
        assert!((e - 1.0).abs() < 1e-12 && (t - 2.0).abs() < 1e-12);
    }
}
