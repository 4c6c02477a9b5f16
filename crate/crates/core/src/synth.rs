//! Seeded synthetic instances for matrix completion, two-view denoising and
//! CUR selection. Every generator is a pure function of its arguments.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::losses::{LabeledDesign, MaskedObservations};
use crate::multiview::ViewSplit;
use crate::numkit::TripletMatrix;
use crate::random::{gaussian_matrix, rng_from_seed, sphere_vector};
use crate::structsparse::GroupStructure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("config error: {0}")]
    Config(String),
}

/// Share of observed entries assigned to training.
pub const TRAIN_FRACTION: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct LowRankInstance {
    pub observations: MaskedObservations,
    /// Clean matrix `U₀V₀`.
    pub truth: Array2<f64>,
}

/// `X = U₀V₀/√rank` with standard-normal factors, an observed mask drawn
/// without replacement, additive Gaussian noise on the observed entries and
/// a 75/25 train/test split.
pub fn synth_lowrank(n: usize, m: usize, rank: usize, obs_frac: f64, noise_sigma: f64, seed: u64) -> Result<LowRankInstance, SynthError> {
    if rank == 0 || rank > n.min(m) {
        return Err(SynthError::Config(format!("rank {rank} must lie in 1..={}", n.min(m))));
    }
    if !(obs_frac > 0.0 && obs_frac <= 1.0) {
        return Err(SynthError::Config(format!("obs_frac {obs_frac} must lie in (0, 1]")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::Config(format!("noise_sigma {noise_sigma} must be a finite nonnegative number")));
    }
    let mut rng = rng_from_seed(seed);
    let u = gaussian_matrix(n, rank, &mut rng);
    let v = gaussian_matrix(rank, m, &mut rng);
    let truth = u.dot(&v) / (rank as f64).sqrt();
    let count = ((obs_frac * (n * m) as f64).round() as usize).clamp(2, n * m);
    let mut picked = sample(&mut rng, n * m, count).into_vec();
    picked.shuffle(&mut rng);
    let noise = Normal::new(0.0, noise_sigma).expect("checked sigma");
    let triple = |p: usize, rng: &mut _| {
        let (i, j) = (p / m, p % m);
        (i, j, truth[[i, j]] + noise.sample(rng))
    };
    let entries: Vec<_> = picked.into_iter().map(|p| triple(p, &mut rng)).collect();
    let n_train = ((TRAIN_FRACTION * count as f64).round() as usize).clamp(1, count - 1);
    let (train, test) = entries.split_at(n_train);
    let to_matrix = |t: &[(usize, usize, f64)]| TripletMatrix::new(n, m, t.to_vec()).expect("indices in range");
    let observations = MaskedObservations::new(to_matrix(train), Some(to_matrix(test))).expect("shapes agree");
    Ok(LowRankInstance { observations, truth })
}

#[derive(Debug, Clone)]
pub struct MultiviewInstance {
    pub x_hat: Array2<f64>,
    pub y_hat: Array2<f64>,
    pub x_clean: Array2<f64>,
    pub y_clean: Array2<f64>,
    pub split: ViewSplit,
}

impl MultiviewInstance {
    /// `‖X − X*‖² + ‖Y − Y*‖²` for an estimate.
    pub fn reconstruction_error(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let sq = |a: &Array2<f64>, b: &Array2<f64>| (a - b).iter().map(|d| d * d).sum::<f64>();
        sq(x, &self.x_clean) + sq(y, &self.y_clean)
    }
}

/// Clean views `X* = A*H*`, `Y* = B*H*` with dictionary columns uniform on the
/// radius-β and radius-γ spheres and standard-normal codes. In each view
/// `round(corrupt_frac·rows·m)` entries are replaced by Uniform[0, 10] draws.
pub fn synth_multiview(split: &ViewSplit, t_star: usize, m: usize, corrupt_frac: f64, seed: u64) -> Result<MultiviewInstance, SynthError> {
    if t_star == 0 || m == 0 {
        return Err(SynthError::Config("t_star and m must be positive".into()));
    }
    if !(0.0..=1.0).contains(&corrupt_frac) {
        return Err(SynthError::Config(format!("corrupt_frac {corrupt_frac} must lie in [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut a = Array2::zeros((split.n1, t_star));
    let mut b = Array2::zeros((split.n2, t_star));
    for i in 0..t_star {
        a.column_mut(i).assign(&sphere_vector(split.n1, split.beta, &mut rng));
        b.column_mut(i).assign(&sphere_vector(split.n2, split.gamma, &mut rng));
    }
    let h = gaussian_matrix(t_star, m, &mut rng);
    let (x_clean, y_clean) = (a.dot(&h), b.dot(&h));
    let mut corrupt = |clean: &Array2<f64>| {
        let mut out = clean.clone();
        let size = out.len();
        let count = (corrupt_frac * size as f64).round() as usize;
        let cols = out.ncols();
        for p in sample(&mut rng, size, count) {
            out[[p / cols, p % cols]] = rng.gen_range(0.0..10.0);
        }
        out
    };
    let x_hat = corrupt(&x_clean);
    let y_hat = corrupt(&y_clean);
    Ok(MultiviewInstance { x_hat, y_hat, x_clean, y_clean, split: split.clone() })
}

#[derive(Debug, Clone)]
pub struct CurInstance {
    pub x: Array2<f64>,
    /// Planted rows and columns, sorted.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// `X = C M R + σE` of rank `k`, where the planted rows of `C` and planted
/// columns of `R` are `boost·I` and the remaining factor rows and columns
/// have unit expected norm. Then `X = X[:, cols] X[rows, cols]⁻¹ X[rows, :]`
/// up to noise and the planted rows and columns are the heaviest.
pub fn synth_cur(n: usize, d: usize, k: usize, boost: f64, sigma: f64, seed: u64) -> Result<CurInstance, SynthError> {
    if k == 0 || k > n.min(d) {
        return Err(SynthError::Config(format!("k = {k} must lie in 1..={}", n.min(d))));
    }
    if !(boost > 0.0 && sigma >= 0.0) {
        return Err(SynthError::Config("boost must be positive and sigma nonnegative".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut rows = sample(&mut rng, n, k).into_vec();
    let mut cols = sample(&mut rng, d, k).into_vec();
    rows.sort_unstable();
    cols.sort_unstable();
    let unit = 1.0 / (k as f64).sqrt();
    let mut c = gaussian_matrix(n, k, &mut rng) * unit;
    let mut r = gaussian_matrix(k, d, &mut rng) * unit;
    for (t, &i) in rows.iter().enumerate() {
        c.row_mut(i).fill(0.0);
        c[[i, t]] = boost;
    }
    for (t, &j) in cols.iter().enumerate() {
        r.column_mut(j).fill(0.0);
        r[[t, j]] = boost;
    }
    // A random orthogonal core keeps X[rows, cols] well conditioned.
    let q = orthonormal_core(k, &mut rng);
    let x = c.dot(&q).dot(&r) + gaussian_matrix(n, d, &mut rng) * sigma;
    Ok(CurInstance { x, rows, cols })
}

fn orthonormal_core(k: usize, rng: &mut crate::random::Rng) -> Array2<f64> {
    let g = gaussian_matrix(k, k, rng);
    let qr = nalgebra::DMatrix::from_fn(k, k, |i, j| g[[i, j]]).qr();
    let q = qr.q();
    Array2::from_shape_fn((k, k), |(i, j)| q[(i, j)])
}

#[derive(Debug, Clone)]
pub struct MulticlassInstance {
    pub train: LabeledDesign,
    pub test: LabeledDesign,
    /// Planted `features × classes` weights of rank `rank`.
    pub truth: Array2<f64>,
}

/// Gaussian features with labels `argmaxₖ (W*ᵀx + σz)ₖ` for a planted
/// low-rank `W*`, split into `train` and `test` examples.
pub fn synth_multiclass(
    features: usize,
    classes: usize,
    train: usize,
    test: usize,
    rank: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<MulticlassInstance, SynthError> {
    if classes < 2 || train == 0 || test == 0 {
        return Err(SynthError::Config("need at least 2 classes and one train and test example".into()));
    }
    if rank == 0 || rank > features.min(classes) {
        return Err(SynthError::Config(format!("rank {rank} must lie in 1..={}", features.min(classes))));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::Config(format!("noise_sigma {noise_sigma} must be a finite nonnegative number")));
    }
    let mut rng = rng_from_seed(seed);
    let truth = gaussian_matrix(features, rank, &mut rng).dot(&gaussian_matrix(rank, classes, &mut rng)) / (rank as f64).sqrt();
    let mut draw = |m: usize| {
        let x = gaussian_matrix(features, m, &mut rng);
        let scores = truth.t().dot(&x) + gaussian_matrix(classes, m, &mut rng) * noise_sigma;
        let labels = scores
            .columns()
            .into_iter()
            .map(|c| c.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).expect("classes ≥ 2"))
            .collect();
        LabeledDesign::new(x, labels, classes).expect("labels in range")
    };
    let train = draw(train);
    let test = draw(test);
    Ok(MulticlassInstance { train, test, truth })
}

#[derive(Debug, Clone)]
pub struct GroupLassoInstance {
    /// `examples × features`
    pub design: Array2<f64>,
    /// `examples × 1`
    pub target: Array2<f64>,
    pub groups: GroupStructure,
    /// `features × 1`, nonzero on the first `active` groups.
    pub truth: Array2<f64>,
}

/// Gaussian design over consecutive unit-cost groups of `group_size`
/// features; the first `active` groups carry standard-normal coefficients.
pub fn synth_group_lasso(
    examples: usize,
    features: usize,
    group_size: usize,
    active: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<GroupLassoInstance, SynthError> {
    if examples == 0 || group_size == 0 || features == 0 || features % group_size != 0 {
        return Err(SynthError::Config(format!("features {features} must be a positive multiple of group_size {group_size}")));
    }
    let count = features / group_size;
    if active > count {
        return Err(SynthError::Config(format!("active {active} exceeds the {count} groups")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::Config(format!("noise_sigma {noise_sigma} must be a finite nonnegative number")));
    }
    let mut rng = rng_from_seed(seed);
    let design = gaussian_matrix(examples, features, &mut rng);
    let mut truth = gaussian_matrix(features, 1, &mut rng);
    truth.slice_mut(ndarray::s![active * group_size.., ..]).fill(0.0);
    let target = design.dot(&truth) + gaussian_matrix(examples, 1, &mut rng) * noise_sigma;
    let groups = GroupStructure::new(features, (0..count).map(|g| (g * group_size..(g + 1) * group_size).collect()).collect(), vec![1.0; count])
        .expect("consecutive groups cover every feature");
    Ok(GroupLassoInstance { design, target, groups, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::MaskedSquared;

    #[test]
    fn full_noiseless_mask_is_recovered_by_the_truth() {
        let inst = synth_lowrank(10, 8, 2, 1.0, 0.0, 3).unwrap();
        let test = inst.observations.test().unwrap();
        assert_eq!(inst.observations.train().nnz() + test.nnz(), 80);
        assert_eq!(test.nnz(), 20);
        assert_eq!(MaskedSquared::rmse_dense(&inst.truth, test), 0.0);
    }

    #[test]
    fn lowrank_is_deterministic_and_guards_rank() {
        let a = synth_lowrank(12, 9, 3, 0.4, 0.1, 5).unwrap();
        let b = synth_lowrank(12, 9, 3, 0.4, 0.1, 5).unwrap();
        assert_eq!(a.observations.train(), b.observations.train());
        assert_eq!(a.observations.test(), b.observations.test());
        assert!(matches!(synth_lowrank(4, 3, 4, 0.5, 0.0, 0), Err(SynthError::Config(_))));
    }

    #[test]
    fn multiview_corruption_count_is_exact() {
        let split = ViewSplit::new(8, 10, 1.0, 5.0).unwrap();
        let clean = synth_multiview(&split, 3, 12, 0.0, 4).unwrap();
        assert_eq!(clean.x_hat, clean.x_clean);
        assert_eq!(clean.y_hat, clean.y_clean);
        let inst = synth_multiview(&split, 3, 12, 0.15, 4).unwrap();
        let changed = |a: &Array2<f64>, b: &Array2<f64>| a.iter().zip(b).filter(|(u, v)| u != v).count();
        assert_eq!(changed(&inst.x_hat, &inst.x_clean), (0.15f64 * 96.0).round() as usize);
        assert_eq!(changed(&inst.y_hat, &inst.y_clean), (0.15f64 * 120.0).round() as usize);
        let again = synth_multiview(&split, 3, 12, 0.15, 4).unwrap();
        assert_eq!(again.x_hat, inst.x_hat);
    }

    #[test]
    fn noiseless_cur_instance_factorizes_through_planted_skeleton() {
        let inst = synth_cur(12, 15, 3, 3.0, 0.0, 9).unwrap();
        let c = inst.x.select(ndarray::Axis(1), &inst.cols);
        let r = inst.x.select(ndarray::Axis(0), &inst.rows);
        let core = c.select(ndarray::Axis(0), &inst.rows);
        let core = nalgebra::DMatrix::from_fn(3, 3, |i, j| core[[i, j]]).try_inverse().unwrap();
        let core = Array2::from_shape_fn((3, 3), |(i, j)| core[(i, j)]);
        let err = (&c.dot(&core).dot(&r) - &inst.x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn multiclass_labels_follow_the_planted_scores_without_noise() {
        let inst = synth_multiclass(6, 3, 40, 10, 2, 0.0, 8).unwrap();
        assert_eq!(inst.train.examples(), 40);
        assert_eq!(inst.test.accuracy(&inst.truth), 1.0);
        assert!(synth_multiclass(6, 3, 4, 4, 4, 0.0, 0).is_err());
    }

    #[test]
    fn group_lasso_truth_is_supported_on_active_groups() {
        let inst = synth_group_lasso(15, 12, 3, 2, 0.0, 6).unwrap();
        assert_eq!(inst.groups.group_count(), 4);
        assert!(inst.truth.iter().skip(6).all(|&v| v == 0.0));
        assert_eq!(inst.design.dot(&inst.truth), inst.target);
        assert!(synth_group_lasso(15, 10, 3, 1, 0.0, 6).is_err());
    }
}
