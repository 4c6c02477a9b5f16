use ndarray::{s, Array1, Array2};

use super::{MultiviewError, ViewSplit};
use crate::gcg::{GcgError, PolarAtom};
use crate::lowrank::{FactorPolar, RankOneAtom};
use crate::numkit::{golden_section_min, sym_eigen, top_singular_pair, PowerOptions, SVD_DIM_GUARD};
use crate::random::{rng_from_seed, sphere_vector};

/// Search interval for `μ`.
pub const MU_MIN: f64 = 1e-8;
pub const MU_MAX: f64 = 1e8;

const LOG_TOL: f64 = 1e-11;
const NULL_REL: f64 = 1e-6;
const SIGMA_BALANCE: f64 = 1e-3;

/// Which view carries the atom when the optimal `μ` sits on a clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// The y-view contributes nothing; `b = 0`.
    XOnly,
    /// The x-view contributes nothing; `a = 0`.
    YOnly,
}

/// Output of the two-view polar.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewPolar {
    /// `‖a‖ = β` (or 0 on a y-only boundary).
    pub a: Array1<f64>,
    /// `‖b‖ = γ` (or 0 on an x-only boundary).
    pub b: Array1<f64>,
    /// Unit row atom `Gᵀc / ‖Gᵀc‖`.
    pub v: Array1<f64>,
    /// `min_μ ‖D_μ Ĝ‖_sp` as found by the search; an upper bound on the polar.
    pub value: f64,
    /// `‖Gᵀ[a; b]‖`, the value achieved by the returned atom.
    pub attained: f64,
    pub mu: f64,
    pub boundary: Option<Boundary>,
}

/// `G` with x-rows scaled by `β` and y-rows by `γ`.
pub fn scale_rows(g: &Array2<f64>, split: &ViewSplit) -> Array2<f64> {
    assert_eq!(g.nrows(), split.rows(), "row count does not match the view split");
    let mut out = g.clone();
    out.slice_mut(s![..split.n1, ..]).mapv_inplace(|x| x * split.beta);
    out.slice_mut(s![split.n1.., ..]).mapv_inplace(|x| x * split.gamma);
    out
}

/// `μ ↦ ‖D_μ Ĝ‖²_sp` from precomputed Gram blocks on the smaller side.
pub struct MuObjective {
    n1: usize,
    kind: GramSide,
}

enum GramSide {
    /// `ĜĜᵀ`, scaled on both sides by `D_μ`.
    Rows(Array2<f64>),
    /// `ĜₓᵀĜₓ` and `Ĝ_yᵀĜ_y`.
    Cols(Array2<f64>, Array2<f64>),
}

fn lambda_max(m: &Array2<f64>) -> f64 {
    match sym_eigen(m) {
        Ok(e) => e.values[e.values.len() - 1].max(0.0),
        // Too large for a dense eigensolve: the matrix is PSD, so σ_max = λ_max.
        Err(_) => top_singular_pair(m, &PowerOptions::default()).map_or(f64::NAN, |t| t.sigma),
    }
}

impl MuObjective {
    pub fn new(g_hat: &Array2<f64>, n1: usize) -> Self {
        let (rows, cols) = g_hat.dim();
        let kind = if rows <= cols.min(SVD_DIM_GUARD) || cols > SVD_DIM_GUARD {
            GramSide::Rows(g_hat.dot(&g_hat.t()))
        } else {
            let gx = g_hat.slice(s![..n1, ..]);
            let gy = g_hat.slice(s![n1.., ..]);
            GramSide::Cols(gx.t().dot(&gx), gy.t().dot(&gy))
        };
        Self { n1, kind }
    }

    pub fn eval(&self, mu: f64) -> f64 {
        let (px, py) = (1.0 + mu, 1.0 + 1.0 / mu);
        match &self.kind {
            GramSide::Rows(k) => {
                let mut m = k.clone();
                let n1 = self.n1;
                for ((i, j), x) in m.indexed_iter_mut() {
                    let di = if i < n1 { px } else { py };
                    let dj = if j < n1 { px } else { py };
                    *x *= (di * dj).sqrt();
                }
                lambda_max(&m)
            }
            GramSide::Cols(kx, ky) => lambda_max(&(kx * px + ky * py)),
        }
    }
}

/// Golden-section search over `log μ ∈ [log 1e-8, log 1e8]`; returns `(μ*, ‖D_μ* Ĝ‖²)`.
pub fn optimal_mu(objective: &MuObjective) -> (f64, f64) {
    let r = golden_section_min(|s: f64| objective.eval(s.exp()), MU_MIN.ln(), MU_MAX.ln(), LOG_TOL);
    (r.x.exp(), r.fx)
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn unit_or_zero(v: Array1<f64>) -> Array1<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// Recovers unit-block `[â; b̂]` for the scaled problem from an interior `μ*`
/// via the near-null space of `M = μ₁I₁ + μ₂I₂ − ĜĜᵀ`.
///
/// `g_hat` is already row-scaled; the result has `‖â‖ = ‖b̂‖ = 1`.
pub fn recover_unit_blocks(g_hat: &Array2<f64>, n1: usize, mu: f64, value_sq: f64) -> Result<Array1<f64>, MultiviewError> {
    let rows = g_hat.nrows();
    if rows > SVD_DIM_GUARD {
        return Err(MultiviewError::TooLarge(rows));
    }
    let mu1 = value_sq / (1.0 + mu);
    let mu2 = mu * value_sq / (1.0 + mu);
    let mut m = -g_hat.dot(&g_hat.t());
    for i in 0..rows {
        m[[i, i]] += if i < n1 { mu1 } else { mu2 };
    }
    let eig = sym_eigen(&m)?;
    let scale = value_sq.max(f64::MIN_POSITIVE);
    let null: Vec<usize> = (0..rows).filter(|&i| eig.values[i].abs() <= NULL_REL * scale).collect();
    if null.is_empty() {
        return Err(MultiviewError::DegenerateNullspace);
    }
    let q = eig.vectors.select(ndarray::Axis(1), &null);
    let q1 = q.slice(s![..n1, ..]);
    let q2 = q.slice(s![n1.., ..]);
    let diff = q1.t().dot(&q1) - q2.t().dot(&q2);
    let de = sym_eigen(&diff)?;
    let k = null.len();
    // Pair the most negative and most positive directions. Without a sign
    // change, take the direction closest to balanced: `μ*` is only located to
    // about sqrt(machine eps), so an exact zero is not expected.
    let mut coeffs = Array1::<f64>::zeros(k);
    let (sn, sp) = (de.values[0], de.values[k - 1]);
    if sn < 0.0 && sp > 0.0 {
        coeffs[k - 1] = (2.0 * -sn / (sp - sn)).sqrt();
        coeffs[0] = (2.0 * sp / (sp - sn)).sqrt();
    } else {
        let z = (0..k).min_by(|&i, &j| de.values[i].abs().total_cmp(&de.values[j].abs())).expect("nonempty");
        if de.values[z].abs() > SIGMA_BALANCE {
            return Err(MultiviewError::DegenerateNullspace);
        }
        coeffs[z] = 2f64.sqrt();
    }
    let c = q.dot(&de.vectors.dot(&coeffs));
    let a = unit_or_zero(c.slice(s![..n1]).to_owned());
    let b = unit_or_zero(c.slice(s![n1..]).to_owned());
    if norm(&a) == 0.0 || norm(&b) == 0.0 {
        return Err(MultiviewError::DegenerateNullspace);
    }
    Ok(ndarray::concatenate![ndarray::Axis(0), a, b])
}

/// Public wrapper: `(a, b)` for the original radii from `μ*`.
pub fn recover_atoms(g: &Array2<f64>, mu: f64, split: &ViewSplit) -> Result<(Array1<f64>, Array1<f64>), MultiviewError> {
    let g_hat = scale_rows(g, split);
    let objective = MuObjective::new(&g_hat, split.n1);
    let c = recover_unit_blocks(&g_hat, split.n1, mu, objective.eval(mu))?;
    Ok((c.slice(s![..split.n1]).to_owned() * split.beta, c.slice(s![split.n1..]).to_owned() * split.gamma))
}

fn assemble(g_hat: &Array2<f64>, split: &ViewSplit, c_unit: Array1<f64>, value: f64, mu: f64, boundary: Option<Boundary>) -> MultiviewPolar {
    let gv = g_hat.t().dot(&c_unit);
    let attained = norm(&gv);
    let v = if attained > 0.0 { gv / attained } else { unit_vector(g_hat.ncols()) };
    MultiviewPolar {
        a: c_unit.slice(s![..split.n1]).to_owned() * split.beta,
        b: c_unit.slice(s![split.n1..]).to_owned() * split.gamma,
        v,
        value: value.max(attained),
        attained,
        mu,
        boundary,
    }
}

fn unit_vector(n: usize) -> Array1<f64> {
    let mut e = Array1::zeros(n);
    e[0] = 1.0;
    e
}

/// Top left singular vector of one view block, padded with zeros for the other.
fn one_sided(g_hat: &Array2<f64>, split: &ViewSplit, side: Boundary) -> Array1<f64> {
    let (range, other) = match side {
        Boundary::XOnly => (0..split.n1, split.n2),
        Boundary::YOnly => (split.n1..split.rows(), split.n1),
    };
    let block = g_hat.slice(s![range.clone(), ..]).to_owned();
    let top = top_singular_pair(&block, &PowerOptions::default()).map(|t| t.u).unwrap_or_else(|_| unit_vector(block.nrows()));
    let zeros = Array1::zeros(other);
    match side {
        Boundary::XOnly => ndarray::concatenate![ndarray::Axis(0), top, zeros],
        Boundary::YOnly => ndarray::concatenate![ndarray::Axis(0), zeros, top],
    }
}

/// Two-view polar by golden section over `μ` with null-space recovery.
///
/// On a clamped `μ*` the one-sided atom of the dominant view is returned. If
/// recovery fails the best of the one-sided atoms and a block-normalized
/// near-null vector is used, and `attained < value` reports the shortfall.
pub fn multiview_polar(g: &Array2<f64>, split: &ViewSplit) -> Result<MultiviewPolar, MultiviewError> {
    let g_hat = scale_rows(g, split);
    if g_hat.iter().all(|&x| x == 0.0) {
        let c = ndarray::concatenate![ndarray::Axis(0), unit_vector(split.n1), unit_vector(split.n2)];
        return Ok(assemble(&g_hat, split, c, 0.0, 1.0, None));
    }
    let objective = MuObjective::new(&g_hat, split.n1);
    let (mu, value_sq) = optimal_mu(&objective);
    let value = value_sq.sqrt();
    let log_span = (MU_MAX / MU_MIN).ln();
    if (mu / MU_MIN).ln() <= 1e-6 * log_span {
        return Ok(assemble(&g_hat, split, one_sided(&g_hat, split, Boundary::XOnly), value, mu, Some(Boundary::XOnly)));
    }
    if (MU_MAX / mu).ln() <= 1e-6 * log_span {
        return Ok(assemble(&g_hat, split, one_sided(&g_hat, split, Boundary::YOnly), value, mu, Some(Boundary::YOnly)));
    }
    match recover_unit_blocks(&g_hat, split.n1, mu, value_sq) {
        Ok(c) => Ok(assemble(&g_hat, split, c, value, mu, None)),
        Err(MultiviewError::DegenerateNullspace) => {
            let candidates = [
                assemble(&g_hat, split, one_sided(&g_hat, split, Boundary::XOnly), value, mu, Some(Boundary::XOnly)),
                assemble(&g_hat, split, one_sided(&g_hat, split, Boundary::YOnly), value, mu, Some(Boundary::YOnly)),
            ];
            Ok(candidates.into_iter().fold(None::<MultiviewPolar>, |best, c| match best {
                Some(b) if b.attained >= c.attained => Some(b),
                _ => Some(c),
            }).expect("two candidates"))
        }
        Err(e) => Err(e),
    }
}

/// `(a, b, value, certified)` from the block-normalized power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicOutcome {
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub value: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// Block-normalized power iteration on `ĜĜᵀ`, returned only when the
/// multipliers read off the fixed point pass the semidefinite certificate
/// `μ₁I₁ + μ₂I₂ ⪰ ĜĜᵀ` (checked with a dense eigendecomposition when the
/// row count allows, by shifted power iteration otherwise).
pub fn multiview_power_heuristic(g: &Array2<f64>, split: &ViewSplit, max_iter: usize, tol: f64, seed: u64) -> Option<HeuristicOutcome> {
    power_heuristic_detailed(g, split, max_iter, tol, seed).ok()
}

/// Why the power heuristic produced no certified atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeuristicMiss {
    /// One block of `ĜĜᵀc` vanished.
    ZeroBlock,
    NotConverged,
    /// The fixed point does not satisfy the stationarity equations.
    Stationarity(f64),
    /// `λ_max(ĜĜᵀ − μ₁I₁ − μ₂I₂)` is positive by this much (relative).
    Uncertified(f64),
}

pub fn power_heuristic_detailed(
    g: &Array2<f64>,
    split: &ViewSplit,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<HeuristicOutcome, HeuristicMiss> {
    let g_hat = scale_rows(g, split);
    let n1 = split.n1;
    let mut rng = rng_from_seed(seed);
    let mut a = sphere_vector(n1, 1.0, &mut rng);
    let mut b = sphere_vector(split.n2, 1.0, &mut rng);
    let apply = |a: &Array1<f64>, b: &Array1<f64>| {
        let c = ndarray::concatenate![ndarray::Axis(0), a.view(), b.view()];
        let st = g_hat.dot(&g_hat.t().dot(&c));
        (st.slice(s![..n1]).to_owned(), st.slice(s![n1..]).to_owned())
    };
    let mut converged = false;
    for _ in 0..max_iter {
        let (s_, t_) = apply(&a, &b);
        let (ns, nt) = (norm(&s_), norm(&t_));
        if ns == 0.0 || nt == 0.0 {
            return Err(HeuristicMiss::ZeroBlock);
        }
        let (a_new, b_new) = (s_ / ns, t_ / nt);
        let change = norm(&(&a_new - &a)) + norm(&(&b_new - &b));
        a = a_new;
        b = b_new;
        if change <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(HeuristicMiss::NotConverged);
    }
    let (s_, t_) = apply(&a, &b);
    let (mu1, mu2) = (a.dot(&s_), b.dot(&t_));
    let scale = (mu1 + mu2).max(f64::MIN_POSITIVE);
    let kkt = norm(&(&s_ - &(&a * mu1))) + norm(&(&t_ - &(&b * mu2)));
    if kkt > tol.sqrt() * scale {
        return Err(HeuristicMiss::Stationarity(kkt / scale));
    }
    let rows = split.rows();
    let mut m = g_hat.dot(&g_hat.t());
    for i in 0..rows {
        m[[i, i]] -= if i < n1 { mu1 } else { mu2 };
    }
    let top = if rows <= SVD_DIM_GUARD {
        let e = sym_eigen(&m).expect("size checked");
        e.values[rows - 1]
    } else {
        // Largest eigenvalue of the shifted, positive-definite operator.
        let shift = mu1.max(mu2);
        for i in 0..rows {
            m[[i, i]] += shift;
        }
        top_singular_pair(&m, &PowerOptions::default()).map_err(|_| HeuristicMiss::NotConverged)?.sigma - shift
    };
    if top > tol * scale {
        return Err(HeuristicMiss::Uncertified(top / scale));
    }
    Ok(HeuristicOutcome { a: a * split.beta, b: b * split.gamma, value: scale.sqrt(), mu1, mu2 })
}

/// Rank-one polar for the two-view column norm, used by the solver.
#[derive(Debug, Clone)]
pub struct TwoViewPolar {
    pub split: ViewSplit,
    /// Try the power heuristic first.
    pub heuristic: bool,
    pub heuristic_iters: usize,
    pub heuristic_tol: f64,
    pub seed: u64,
}

impl TwoViewPolar {
    pub fn new(split: ViewSplit) -> Self {
        Self { split, heuristic: true, heuristic_iters: 500, heuristic_tol: 1e-10, seed: 0x7a11 }
    }
}

impl FactorPolar<Array2<f64>> for TwoViewPolar {
    fn polar(&mut self, direction: &Array2<f64>) -> Result<PolarAtom<RankOneAtom>, GcgError> {
        let split = self.split;
        let to_atom = |a: &Array1<f64>, b: &Array1<f64>| {
            let u = ndarray::concatenate![ndarray::Axis(0), a.view(), b.view()];
            let gv = direction.t().dot(&u);
            let value = norm(&gv);
            let v = if value > 0.0 { gv / value } else { unit_vector(direction.ncols()) };
            (RankOneAtom { u, v }, value)
        };
        if self.heuristic {
            if let Some(h) = multiview_power_heuristic(direction, &split, self.heuristic_iters, self.heuristic_tol, self.seed) {
                let (atom, value) = to_atom(&h.a, &h.b);
                let certified = h.value.max(value);
                return Ok(PolarAtom { atom, value, additive_error: certified - value + self.heuristic_tol * certified, factor: 1.0 });
            }
        }
        let p = multiview_polar(direction, &split).map_err(|e| GcgError::Oracle(e.to_string()))?;
        let (atom, value) = to_atom(&p.a, &p.b);
        Ok(PolarAtom { atom, value, additive_error: (p.value - value).max(0.0) + LOG_TOL * p.value, factor: 1.0 })
    }
}
