use super::{GroupStructure, QExponent, StructError, ENUMERATION_GUARD};
use crate::numkit::project_weighted_simplex;
use ndarray::Array1;

pub const SMOOTHED_DEFAULT_EPS: f64 = 1e-3;

/// Near-ties within this relative margin are broken by support size, then lexicographically.
const TIE_REL: f64 = 1e-12;

/// A unit atom `w` supported on `C` with `‖w_C‖_p·J(C)^{1/q} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportAtom {
    /// Sorted variable indices.
    pub support: Vec<usize>,
    /// Values on `support`, in the same order.
    pub coeffs: Vec<f64>,
    pub cost: f64,
}

impl SupportAtom {
    /// The coefficients maximizing `⟨g, w⟩` over unit atoms supported on `support`.
    pub fn for_direction(g: &[f64], support: Vec<usize>, gs: &GroupStructure, q: QExponent) -> Self {
        assert!(!support.is_empty(), "atom support must be nonempty");
        let cost = gs.subset_cost(&support);
        let scale = 1.0 / q.root(cost);
        let gc: Vec<f64> = support.iter().map(|&i| g[i]).collect();
        let coeffs = if gc.iter().all(|&x| x == 0.0) {
            let mut c = vec![0.0; gc.len()];
            c[0] = scale;
            c
        } else if q.q() == 1.0 {
            gc.iter().map(|&x| sign(x) * scale).collect()
        } else {
            // Hölder equality case: wᵢ ∝ sign(gᵢ)|gᵢ|^{q−1}, normalized in ℓp.
            let qq = q.q();
            let norm_q = gc.iter().map(|x| x.abs().powf(qq)).sum::<f64>().powf(1.0 / qq);
            gc.iter().map(|&x| sign(x) * (x.abs() / norm_q).powf(qq - 1.0) * scale).collect()
        };
        Self { support, coeffs, cost }
    }

    pub fn dot(&self, g: &[f64]) -> f64 {
        self.support.iter().zip(&self.coeffs).map(|(&i, &c)| g[i] * c).sum()
    }

    /// Adds `weight·atom` into a dense buffer.
    pub fn add_to(&self, weight: f64, out: &mut [f64]) {
        for (&i, &c) in self.support.iter().zip(&self.coeffs) {
            out[i] += weight * c;
        }
    }

    /// `‖coeffs‖_p·J(C)^{1/q}`, equal to 1 for a valid atom.
    pub fn normalization(&self, q: QExponent) -> f64 {
        let norm_p = if q.q() == 1.0 {
            self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
        } else {
            let p = q.q() / (q.q() - 1.0);
            self.coeffs.iter().map(|c| c.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        };
        norm_p * q.root(self.cost)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_enumerable(n: usize) -> Result<(), StructError> {
    if n > ENUMERATION_GUARD {
        Err(StructError::DimensionTooLarge { n, guard: ENUMERATION_GUARD })
    } else {
        Ok(())
    }
}

/// True when `a` should replace the incumbent `b` among equal-ratio subsets.
fn prefer_on_tie(a: u64, b: u64) -> bool {
    match a.count_ones().cmp(&b.count_ones()) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        // Equal sizes: the set owning the lowest differing index sorts first.
        std::cmp::Ordering::Equal => {
            let d = a ^ b;
            d != 0 && a & (d & d.wrapping_neg()) != 0
        }
    }
}

fn mask_to_set(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Maximizes `Σ_{i∈A} g̃ᵢ / cost(A)` over nonempty masks; returns `(ratio, mask)`.
fn enumerate_ratio(weights: &[f64], cost: impl Fn(u64) -> f64, admissible: impl Fn(u64) -> bool) -> (f64, u64) {
    let n = weights.len();
    let total = 1u64 << n;
    let mut sums = vec![0.0; total as usize];
    let mut best = (f64::NEG_INFINITY, 0u64);
    for mask in 1..total {
        let low = mask.trailing_zeros() as usize;
        sums[mask as usize] = sums[(mask & (mask - 1)) as usize] + weights[low];
        if !admissible(mask) {
            continue;
        }
        let c = cost(mask);
        if c <= 0.0 {
            continue;
        }
        let ratio = sums[mask as usize] / c;
        if best.1 == 0 {
            best = (ratio, mask);
            continue;
        }
        let margin = TIE_REL * best.0.abs().max(f64::MIN_POSITIVE);
        if ratio > best.0 + margin || ((ratio - best.0).abs() <= margin && prefer_on_tie(mask, best.1)) {
            best = (ratio, mask);
        }
    }
    best
}

/// `κ°(g) = max_{A≠∅} ‖g_A‖_q / J(A)^{1/q}` by enumeration, with the maximizing support.
pub fn polar_bruteforce(g: &[f64], gs: &GroupStructure, q: QExponent) -> Result<(f64, Vec<usize>), StructError> {
    let n = gs.n();
    assert_eq!(g.len(), n);
    check_enumerable(n)?;
    let lifted: Vec<f64> = g.iter().map(|&x| q.lift(x)).collect();
    let masks = gs.group_masks();
    let costs = gs.costs();
    let cost = |a: u64| masks.iter().zip(costs).filter(|(m, _)| **m & a != 0).map(|(_, c)| c).sum::<f64>();
    let (ratio, mask) = enumerate_ratio(&lifted, cost, |_| true);
    Ok((q.root(ratio), mask_to_set(mask)))
}

/// The same polar evaluated on the lifted ground set `[n] ∪ groups`, where a
/// lifted set is admissible when it contains every group of each of its
/// variables and costs the sum of its group costs. Returns `κ°` of `[g; 0]`.
pub fn lifted_polar_bruteforce(g: &[f64], gs: &GroupStructure, q: QExponent) -> Result<f64, StructError> {
    let (n, m) = (gs.n(), gs.group_count());
    check_enumerable(n + m)?;
    let mut lifted: Vec<f64> = g.iter().map(|&x| q.lift(x)).collect();
    lifted.extend(std::iter::repeat(0.0).take(m));
    let needs: Vec<u64> = (0..n).map(|i| gs.membership(i).iter().fold(0u64, |acc, &k| acc | 1 << (n + k))).collect();
    let admissible = |b: u64| (0..n).all(|i| b >> i & 1 == 0 || b & needs[i] == needs[i]);
    let cost = |b: u64| (0..m).filter(|k| b >> (n + k) & 1 == 1).map(|k| gs.costs()[k]).sum::<f64>();
    let (ratio, _) = enumerate_ratio(&lifted, cost, admissible);
    Ok(q.root(ratio.max(0.0)))
}

/// Exact gauge for `q = 1`: the Lovász extension of `J` at `|w|`.
///
/// The unit polar ball `{y : |y|(A) ≤ J(A)}` is the polymatroid of the
/// coverage function `J`, so the greedy order solves the dual exactly.
pub fn gauge_q1(w: &[f64], gs: &GroupStructure) -> f64 {
    let mut order: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()));
    let mut hit = vec![false; gs.group_count()];
    let mut value = 0.0;
    for &i in &order {
        let gain: f64 = gs
            .membership(i)
            .iter()
            .filter(|&&g| !std::mem::replace(&mut hit[g], true))
            .map(|&g| gs.costs()[g])
            .sum();
        value += w[i].abs() * gain;
    }
    value
}

/// Smoothed `h(w̃) = −Σᵢ g̃ᵢ min_{G∋i} w̃_G` and its gradient over groups.
///
/// `h_ε = c Σᵢ log Σ_{G∋i} exp(−g̃ᵢ w̃_G / c)` with `c = ε/(n log r)`;
/// when every variable has one group the exact linear form is returned.
pub fn smoothed_h_value_grad(w_tilde: &[f64], g_tilde: &[f64], gs: &GroupStructure, eps: f64) -> (f64, Vec<f64>) {
    assert!(eps > 0.0, "smoothing width must be positive");
    let mut grad = vec![0.0; gs.group_count()];
    let mut value = 0.0;
    if gs.r() <= 1 {
        for (i, &gi) in g_tilde.iter().enumerate() {
            let g = gs.membership(i)[0];
            value -= gi * w_tilde[g];
            grad[g] -= gi;
        }
        return (value, grad);
    }
    let c = eps / (gs.n() as f64 * (gs.r() as f64).ln());
    let mut z = Vec::with_capacity(gs.r());
    for (i, &gi) in g_tilde.iter().enumerate() {
        let groups = gs.membership(i);
        z.clear();
        z.extend(groups.iter().map(|&g| -gi * w_tilde[g] / c));
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for e in z.iter_mut() {
            *e = (*e - top).exp();
            total += *e;
        }
        value += c * (top + total.ln());
        for (&g, &e) in groups.iter().zip(z.iter()) {
            grad[g] -= gi * e / total;
        }
    }
    (value, grad)
}

#[cfg(test)]
/// Exact `h(w̃)`.
fn h_exact(w_tilde: &[f64], g_tilde: &[f64], gs: &GroupStructure) -> f64 {
    -g_tilde
        .iter()
        .enumerate()
        .map(|(i, &gi)| gi * gs.membership(i).iter().map(|&g| w_tilde[g]).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
}

/// Options for the smoothed LP polar.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPolar {
    pub eps: f64,
    /// Interpret `eps` relative to `max g̃` instead of absolutely.
    pub relative: bool,
    /// Overrides the default iteration cap `⌈(2/ε̂)√(n log r)⌉` with `ε̂ = ε / max g̃`.
    pub max_iter: Option<usize>,
}

impl Default for SmoothedPolar {
    fn default() -> Self {
        Self { eps: SMOOTHED_DEFAULT_EPS, relative: false, max_iter: None }
    }
}

/// Result of the smoothed simplex LP.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSolution {
    /// `−h_ε` at the returned point.
    pub lambda_eps: f64,
    pub w_tilde: Vec<f64>,
    /// Certified upper bound on the LP value from the Frank-Wolfe gap.
    pub upper: f64,
    /// Absolute smoothing width used.
    pub eps: f64,
    pub iterations: usize,
}

/// Maximizes `−h_ε` over `{w̃ ≥ 0, Σ_G c_G w̃_G = 1}` by accelerated projected gradient.
/// The LP value is `max_A g̃(A)/J(A)` with `g̃ = |g|^q`; its `q`-th root is the polar.
pub fn group_polar_smoothed(g: &[f64], gs: &GroupStructure, q: QExponent, opts: &SmoothedPolar) -> SmoothedSolution {
    let g_tilde: Vec<f64> = g.iter().map(|&x| q.lift(x)).collect();
    solve_smoothed_lp(&g_tilde, gs, opts, None)
}

fn min_ratio(grad: &[f64], costs: &[f64]) -> (usize, f64) {
    grad.iter().zip(costs).map(|(g, c)| g / c).enumerate().fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc })
}

fn solve_smoothed_lp(g_tilde: &[f64], gs: &GroupStructure, opts: &SmoothedPolar, start: Option<&[f64]>) -> SmoothedSolution {
    let m = gs.group_count();
    let costs = Array1::from(gs.costs().to_vec());
    let scale = g_tilde.iter().copied().fold(0.0f64, f64::max);
    let eps = if opts.relative { opts.eps * scale } else { opts.eps };
    let total_cost: f64 = costs.sum();
    let uniform = vec![1.0 / total_cost; m];

    if scale == 0.0 {
        return SmoothedSolution { lambda_eps: 0.0, w_tilde: uniform, upper: 0.0, eps, iterations: 0 };
    }
    let group_sums: Vec<f64> = gs.groups().iter().map(|members| members.iter().map(|&i| g_tilde[i]).sum()).collect();
    if gs.r() <= 1 {
        // Linear objective: the best vertex is exact.
        let (k, _) = group_sums.iter().zip(gs.costs()).map(|(s, c)| -s / c).enumerate().fold((0, f64::INFINITY), |a, (k, v)| if v < a.1 { (k, v) } else { a });
        let mut w = vec![0.0; m];
        w[k] = 1.0 / gs.costs()[k];
        let value = group_sums[k] / gs.costs()[k];
        return SmoothedSolution { lambda_eps: value, w_tilde: w, upper: value, eps, iterations: 0 };
    }

    let n = gs.n() as f64;
    let log_r = (gs.r() as f64).ln();
    let c = eps / (n * log_r);
    // ∇²h_ε ≼ Σᵢ (g̃ᵢ²/c)·diag(pᵢ), so the largest group sum of g̃² over c bounds it.
    let lip = gs.groups().iter().map(|members| members.iter().map(|&i| g_tilde[i] * g_tilde[i]).sum::<f64>()).fold(0.0, f64::max) / c;
    let rel_eps = eps / scale;
    let cap = opts.max_iter.unwrap_or_else(|| ((2.0 / rel_eps) * (n * log_r).sqrt()).ceil() as usize).max(1);
    // Rounding lands at or above λ* − ε − gap, so half of ε keeps the 2ε guarantee.
    let gap_tol = 0.5 * eps;

    let eval = |w: &[f64]| smoothed_h_value_grad(w, g_tilde, gs, eps);
    let fw_gap = |w: &[f64], grad: &[f64]| {
        let lin: f64 = w.iter().zip(grad).map(|(a, b)| a * b).sum();
        (lin - min_ratio(grad, gs.costs()).1).max(0.0)
    };

    let mut x = match start {
        Some(s) if s.len() == m => project_weighted_simplex(Array1::from(s.to_vec()).view(), costs.view(), 1.0),
        _ => Array1::from(uniform),
    };
    let mut y = x.clone();
    let (mut fx, mut gx) = eval(x.as_slice().unwrap());
    let mut best = (fx, x.clone(), fw_gap(x.as_slice().unwrap(), &gx));
    let mut t = 1.0f64;
    let mut iterations = 0;
    while iterations < cap {
        iterations += 1;
        let (_, gy) = eval(y.as_slice().unwrap());
        let step = &y - &(Array1::from(gy) / lip);
        let x_new = project_weighted_simplex(step.view(), costs.view(), 1.0);
        let (f_new, g_new) = eval(x_new.as_slice().unwrap());
        let moved = (&x_new - &x).mapv(|d| d * d).sum().sqrt();
        if f_new > fx {
            // Adaptive restart keeps the sequence monotone.
            t = 1.0;
            y = x.clone();
            if moved <= 1e-15 {
                break;
            }
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_new + &((&x_new - &x) * ((t - 1.0) / t_new));
        t = t_new;
        x = x_new;
        fx = f_new;
        gx = g_new;
        if fx < best.0 {
            best = (fx, x.clone(), f64::INFINITY);
        }
        if iterations % 10 == 0 || moved <= 1e-15 {
            let gap = fw_gap(x.as_slice().unwrap(), &gx);
            if fx <= best.0 {
                best.2 = gap;
            }
            if gap <= gap_tol || moved <= 1e-15 {
                break;
            }
        }
    }
    let (f_best, x_best, mut gap) = best;
    if !gap.is_finite() {
        let (_, g_best) = eval(x_best.as_slice().unwrap());
        gap = fw_gap(x_best.as_slice().unwrap(), &g_best);
    }
    SmoothedSolution { lambda_eps: -f_best, w_tilde: x_best.to_vec(), upper: -f_best + gap + eps, eps, iterations }
}

/// Integral support recovered from a smoothed LP solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub support: Vec<usize>,
    /// `g̃(C)/J(C)`; the polar is its `q`-th root.
    pub value: f64,
    pub fell_back: bool,
}

/// Threshold rounding of `w̃`: each cut keeps the top-`k` groups and covers the
/// variables whose groups are all kept. One sweep in `O(nr + m log m)`.
///
/// The layer-cake decomposition writes `w̃` as a convex combination of the
/// normalized cut indicators, so the best cut is never below `−h(w̃) ≥ λ_ε`.
pub fn recover_integral_support(w_tilde: &[f64], g_tilde: &[f64], gs: &GroupStructure, lambda_eps: f64, eps: f64) -> Result<Recovery, StructError> {
    let (n, m) = (gs.n(), gs.group_count());
    if g_tilde.iter().all(|&x| x == 0.0) {
        return Ok(Recovery { support: vec![0], value: 0.0, fell_back: false });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| w_tilde[b].total_cmp(&w_tilde[a]).then(a.cmp(&b)));
    let mut rank = vec![0usize; m];
    for (k, &g) in order.iter().enumerate() {
        rank[g] = k;
    }
    let cover: Vec<usize> = (0..n).map(|i| gs.membership(i).iter().map(|&g| rank[g]).max().expect("covered")).collect();
    let mut bucket = vec![0.0; m];
    for (i, &k) in cover.iter().enumerate() {
        bucket[k] += g_tilde[i];
    }
    let (mut sum, mut cost) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..m {
        sum += bucket[k];
        cost += gs.costs()[order[k]];
        let v = sum / cost;
        if v > best.0 {
            best = (v, k);
        }
    }
    // Zero-weight variables only add cost.
    let support: Vec<usize> = (0..n).filter(|&i| cover[i] <= best.1 && g_tilde[i] > 0.0).collect();
    let value = support.iter().map(|&i| g_tilde[i]).sum::<f64>() / gs.subset_cost(&support);

    if value >= lambda_eps - eps {
        return Ok(Recovery { support, value, fell_back: false });
    }
    if n > ENUMERATION_GUARD {
        return Err(StructError::RequiresExactFallback(n));
    }
    let (v, support) = polar_bruteforce(g_tilde, gs, QExponent::ONE)?;
    Ok(Recovery { support, value: v, fell_back: true })
}

/// The polar atom of `g` via the smoothed LP and rounding; `eps` is absolute.
pub fn polar_atom(g: &[f64], gs: &GroupStructure, q: QExponent, eps: f64) -> Result<SupportAtom, StructError> {
    let opts = SmoothedPolar { eps, ..Default::default() };
    let sol = group_polar_smoothed(g, gs, q, &opts);
    let g_tilde: Vec<f64> = g.iter().map(|&x| q.lift(x)).collect();
    let rec = recover_integral_support(&sol.w_tilde, &g_tilde, gs, sol.lambda_eps, sol.eps)?;
    Ok(SupportAtom::for_direction(g, rec.support, gs, q))
}

/// Support selection behind the structured polar.
pub trait SubsetOracle {
    /// `(support, g̃(C)/J(C), upper bound on max_A g̃(A)/J(A))`.
    fn select(&mut self, g: &[f64], gs: &GroupStructure, q: QExponent) -> Result<(Vec<usize>, f64, f64), StructError>;
}

/// Exact enumeration, `n ≤ 20`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForcePolar;

impl SubsetOracle for BruteForcePolar {
    fn select(&mut self, g: &[f64], gs: &GroupStructure, q: QExponent) -> Result<(Vec<usize>, f64, f64), StructError> {
        let (value, support) = polar_bruteforce(g, gs, q)?;
        let ratio = value.powf(q.q());
        Ok((support, ratio, ratio))
    }
}

impl SubsetOracle for SmoothedPolar {
    fn select(&mut self, g: &[f64], gs: &GroupStructure, q: QExponent) -> Result<(Vec<usize>, f64, f64), StructError> {
        WarmPolar::new(self.clone()).select(g, gs, q)
    }
}

/// The smoothed oracle started from its previous LP solution, which pays off
/// when successive directions are close, as between conditional gradient steps.
#[derive(Debug, Clone)]
pub struct WarmPolar {
    pub opts: SmoothedPolar,
    last: Option<Vec<f64>>,
}

impl WarmPolar {
    pub fn new(opts: SmoothedPolar) -> Self {
        Self { opts, last: None }
    }
}

impl SubsetOracle for WarmPolar {
    fn select(&mut self, g: &[f64], gs: &GroupStructure, q: QExponent) -> Result<(Vec<usize>, f64, f64), StructError> {
        let g_tilde: Vec<f64> = g.iter().map(|&x| q.lift(x)).collect();
        let sol = solve_smoothed_lp(&g_tilde, gs, &self.opts, self.last.as_deref());
        let rec = recover_integral_support(&sol.w_tilde, &g_tilde, gs, sol.lambda_eps, sol.eps)?;
        self.last = Some(sol.w_tilde);
        Ok((rec.support, rec.value, sol.upper.max(rec.value)))
    }
}
