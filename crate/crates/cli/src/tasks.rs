//! Builds datasets from a config and dispatches to the solvers.

use std::path::Path;

use gcg::baselines::{run_apg_tracked, solve_bcd_multiview, ApgOptions, ApgOutput, BcdOptions, L1Prox, TraceProx};
use gcg::gcg::{SolverOptions, SolverTrace, StepRule};
use gcg::losses::{LabeledDesign, LinearLeastSquares, MaskedObservations, MaskedSquared, MulticlassLogistic, SmoothLoss};
use gcg::lowrank::{solve_matrix_completion, solve_multiclass_tracenorm, LowRankOptions};
use gcg::multiview::{solve_multiview_tracked, ViewLoss, ViewSplit};
use gcg::numkit::TripletMatrix;
use gcg::random::rng_from_seed;
use gcg::structsparse::{solve_cur, solve_structured_gcg, CurIndex, GroupStructure, QExponent, SmoothedPolar, StructuredOptions, StructuredOracle, ENUMERATION_GUARD};
use gcg::synth::{synth_cur, synth_group_lasso, synth_lowrank, synth_multiclass, synth_multiview, CurInstance, GroupLassoInstance, MulticlassInstance, MultiviewInstance};
use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, DataSource, ExperimentConfig, SolverKind, Task};
use crate::data::{load_dense, load_labeled, load_triplets, DataError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    /// The solver stopped with an error; `partial` holds whatever it produced.
    #[error("solver failed: {message}")]
    Solver { message: String, partial: Option<Box<RunResult>> },
}

impl RunError {
    fn solver(e: impl std::fmt::Display) -> Self {
        Self::Solver { message: e.to_string(), partial: None }
    }
}

/// Solver output in a task-independent form.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: SolverTrace,
    pub final_objective: f64,
    pub final_test_metric: Option<f64>,
    pub atoms: usize,
    pub stop: String,
    /// Task-specific summary fields.
    pub extra: serde_json::Map<String, Value>,
}

impl RunResult {
    fn from_trace(trace: SolverTrace, stop: impl Into<String>) -> Self {
        let last = trace.last().expect("solvers record the starting point").clone();
        Self { final_objective: last.objective, final_test_metric: last.test_metric, atoms: last.atoms, trace, stop: stop.into(), extra: Default::default() }
    }

    fn from_apg(out: ApgOutput) -> Self {
        let stop = if out.converged { "converged" } else { "max_iters" };
        let mut r = Self::from_trace(out.trace, stop);
        r.final_objective = out.objective;
        r
    }

    /// Whether the objective column never increases, up to rounding.
    pub fn monotone(&self) -> bool {
        self.trace.objectives().windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    }
}

/// A loaded or generated dataset.
pub enum Dataset {
    Ratings { observations: MaskedObservations, duplicates: usize },
    Multiclass { train: LabeledDesign, test: Option<LabeledDesign> },
    Multiview { x: Array2<f64>, y: Array2<f64>, split: ViewSplit, clean: Option<(Array2<f64>, Array2<f64>)> },
    GroupLasso { design: Array2<f64>, target: Array2<f64>, groups: GroupStructure, truth: Option<Array2<f64>> },
    Cur { x: Array2<f64>, planted: Option<(Vec<usize>, Vec<usize>)> },
}

fn config_err(key: &str, value: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError::invalid(key, value, e.to_string())
}

fn split_from(cfg: &ExperimentConfig, n2: usize) -> Result<ViewSplit, ConfigError> {
    let n1 = cfg.count("split.n1")?;
    ViewSplit::new(n1, n2, cfg.positive("split.beta")?, cfg.positive("split.gamma")?).map_err(|e| config_err("split.n1", cfg.text("split.n1"), e))
}

/// Generates the synthetic dataset a config describes.
pub fn synthesize(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset, ConfigError> {
    let bad = |key: &'static str| move |e: gcg::synth::SynthError| config_err(key, cfg.text(key), e);
    Ok(match cfg.task {
        Task::MatrixCompletion => {
            let inst = synth_lowrank(
                cfg.count("synth.rows")?,
                cfg.count("synth.cols")?,
                cfg.count("synth.rank")?,
                cfg.positive("synth.obs_frac")?,
                cfg.nonneg("synth.noise")?,
                seed,
            )
            .map_err(bad("synth.rank"))?;
            Dataset::Ratings { observations: inst.observations, duplicates: 0 }
        }
        Task::Multiclass => {
            let MulticlassInstance { train, test, .. } = synth_multiclass(
                cfg.count("synth.features")?,
                cfg.count("synth.classes")?,
                cfg.count("synth.train")?,
                cfg.count("synth.test")?,
                cfg.count("synth.rank")?,
                cfg.nonneg("synth.noise")?,
                seed,
            )
            .map_err(bad("synth.rank"))?;
            Dataset::Multiclass { train, test: Some(test) }
        }
        Task::Multiview => {
            let split = split_from(cfg, cfg.count("synth.n2")?)?;
            let MultiviewInstance { x_hat, y_hat, x_clean, y_clean, split, .. } =
                synth_multiview(&split, cfg.count("synth.t_star")?, cfg.count("synth.m")?, cfg.nonneg("synth.corrupt")?, seed).map_err(bad("synth.corrupt"))?;
            Dataset::Multiview { x: x_hat, y: y_hat, split, clean: Some((x_clean, y_clean)) }
        }
        Task::GroupLasso => {
            let GroupLassoInstance { design, target, groups, truth } = synth_group_lasso(
                cfg.count("synth.examples")?,
                cfg.count("synth.features")?,
                cfg.count("synth.group_size")?,
                cfg.get("synth.active")?,
                cfg.nonneg("synth.noise")?,
                seed,
            )
            .map_err(bad("synth.features"))?;
            Dataset::GroupLasso { design, target, groups, truth: Some(truth) }
        }
        Task::Cur => {
            let CurInstance { x, rows, cols } = synth_cur(
                cfg.count("synth.rows")?,
                cfg.count("synth.cols")?,
                cfg.count("synth.k")?,
                cfg.positive("synth.boost")?,
                cfg.nonneg("synth.noise")?,
                seed,
            )
            .map_err(bad("synth.k"))?;
            Dataset::Cur { x, planted: Some((rows, cols)) }
        }
    })
}

/// Seeded split of observed entries into train and held-out parts.
fn holdout(all: &TripletMatrix, test_frac: f64, seed: u64) -> MaskedObservations {
    let (rows, cols) = all.shape();
    let mut entries: Vec<_> = all.iter().collect();
    let n_test = ((test_frac * entries.len() as f64).round() as usize).min(entries.len().saturating_sub(1));
    if n_test == 0 {
        return MaskedObservations::new(all.clone(), None).expect("shapes agree");
    }
    entries.shuffle(&mut rng_from_seed(seed));
    let (test, train) = entries.split_at(n_test);
    let build = |t: &[(usize, usize, f64)]| TripletMatrix::new(rows, cols, t.to_vec()).expect("indices in range");
    MaskedObservations::new(build(train), Some(build(test))).expect("shapes agree")
}

/// Loads or generates the dataset for a configuration.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, RunError> {
    let (path, delimiter) = match &cfg.data {
        DataSource::Synth { seed } => return Ok(synthesize(cfg, *seed)?),
        DataSource::File { path, delimiter } => (path.as_path(), *delimiter),
    };
    Ok(match cfg.task {
        Task::MatrixCompletion => {
            let frac: f64 = cfg.nonneg("data.test_frac")?;
            if frac >= 1.0 {
                return Err(ConfigError::invalid("data.test_frac", cfg.text("data.test_frac"), "must be below 1").into());
            }
            let loaded = load_triplets(path, delimiter)?;
            let observations = holdout(loaded.observations.train(), frac, cfg.seed);
            Dataset::Ratings { observations, duplicates: loaded.duplicates }
        }
        Task::Multiclass => Dataset::Multiclass { train: load_labeled(path, delimiter)?, test: None },
        Task::Multiview => {
            let z = load_dense(path, delimiter)?;
            let n1 = cfg.count("split.n1")?;
            if n1 >= z.nrows() {
                return Err(ConfigError::invalid("split.n1", cfg.text("split.n1"), format!("must be below the {} data rows", z.nrows())).into());
            }
            let split = split_from(cfg, z.nrows() - n1)?;
            Dataset::Multiview { x: z.slice(s![..n1, ..]).to_owned(), y: z.slice(s![n1.., ..]).to_owned(), split, clean: None }
        }
        Task::GroupLasso => {
            let rows = load_dense(path, delimiter)?;
            if rows.ncols() < 2 {
                return Err(DataError::Parse { path: path.display().to_string(), line: 1, message: "expected a target followed by features".into() }.into());
            }
            let n = rows.ncols() - 1;
            let groups = match cfg.text("groups") {
                "" => GroupStructure::singletons(n),
                file => GroupStructure::load(n, Path::new(file)).map_err(|e| config_err("groups", file, e))?,
            };
            Dataset::GroupLasso { design: rows.slice(s![.., 1..]).to_owned(), target: rows.slice(s![.., ..1]).to_owned(), groups, truth: None }
        }
        Task::Cur => Dataset::Cur { x: load_dense(path, delimiter)?, planted: None },
    })
}

pub fn solver_options(cfg: &ExperimentConfig) -> Result<SolverOptions, ConfigError> {
    let step_rule = match cfg.text("step_rule") {
        "open_loop" => StepRule::OpenLoop,
        "adaptive" => StepRule::Adaptive,
        "joint" => StepRule::JointLineSearch,
        other => return Err(ConfigError::invalid("step_rule", other, "expected open_loop, adaptive or joint")),
    };
    Ok(SolverOptions {
        max_iters: cfg.get("max_iters")?,
        time_budget_s: cfg.positive("time_budget_s")?,
        step_rule,
        rel_obj_tol: cfg.nonneg("rel_obj_tol")?,
        seed: cfg.seed,
        improve: cfg.get("improve")?,
        track_gap: cfg.get("track_gap")?,
        ..Default::default()
    })
}

fn apg_options(cfg: &ExperimentConfig) -> Result<ApgOptions, ConfigError> {
    Ok(ApgOptions {
        max_iters: cfg.count("apg.max_iters")?,
        tol: cfg.nonneg("apg.tol")?,
        track_gap: cfg.get("track_gap")?,
        time_budget_s: cfg.positive("time_budget_s")?,
        ..Default::default()
    })
}

fn structured_options(cfg: &ExperimentConfig, n: usize) -> Result<StructuredOptions, ConfigError> {
    let oracle = match cfg.text("oracle") {
        "smoothed" => StructuredOracle::Smoothed(SmoothedPolar { eps: cfg.positive("polar.eps")?, relative: cfg.get("polar.relative")?, max_iter: None }),
        "bruteforce" if n <= ENUMERATION_GUARD => StructuredOracle::BruteForce,
        "bruteforce" => return Err(ConfigError::invalid("oracle", "bruteforce", format!("needs at most {ENUMERATION_GUARD} variables, the problem has {n}"))),
        other => return Err(ConfigError::invalid("oracle", other, "expected smoothed or bruteforce")),
    };
    Ok(StructuredOptions { solver: solver_options(cfg)?, oracle, ..Default::default() })
}

fn apg_start<L: SmoothLoss>(loss: &L) -> (f64, Array2<f64>) {
    (loss.lipschitz_hint().unwrap_or(1.0), Array2::zeros(loss.shape()))
}

fn stop_name(stop: gcg::gcg::StopReason) -> &'static str {
    match stop {
        gcg::gcg::StopReason::MaxIters => "max_iters",
        gcg::gcg::StopReason::TimeBudget => "time_budget",
        gcg::gcg::StopReason::ObjectiveStalled => "objective_stalled",
    }
}

/// Runs the configured solver on a dataset.
pub fn run_solver(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunResult, RunError> {
    let lambda = cfg.lambda;
    let lowrank = || -> Result<LowRankOptions, ConfigError> { Ok(LowRankOptions { solver: solver_options(cfg)?, ..Default::default() }) };
    let gcg_failure = |e: gcg::gcg::GcgFailure<gcg::lowrank::FactorModel>| RunError::Solver {
        message: e.error.to_string(),
        partial: Some(Box::new(RunResult::from_trace(e.last.trace, "failed"))),
    };
    let mut result = match (data, cfg.solver) {
        (Dataset::Ratings { observations, duplicates }, solver) => {
            let mut r = match solver {
                SolverKind::Gcg => {
                    let out = solve_matrix_completion(observations, lambda, &lowrank()?).map_err(gcg_failure)?;
                    let mut r = RunResult::from_trace(out.trace, stop_name(out.stop));
                    r.atoms = out.state.rank();
                    r
                }
                _ => {
                    let loss = MaskedSquared::new(observations);
                    let (l0, w0) = apg_start(&loss);
                    let metric = observations.test().map(|t| move |w: &Array2<f64>| MaskedSquared::rmse_dense(w, t));
                    let metric = metric.as_ref().map(|m| m as &dyn Fn(&Array2<f64>) -> f64);
                    RunResult::from_apg(run_apg_tracked(&loss, TraceProx, lambda, l0, &w0, &apg_options(cfg)?, metric))
                }
            };
            r.extra.insert("duplicates".into(), json!(duplicates));
            r
        }
        (Dataset::Multiclass { train, test }, SolverKind::Gcg) => {
            let out = solve_multiclass_tracenorm(train, lambda, &lowrank()?, test.as_ref()).map_err(gcg_failure)?;
            let mut r = RunResult::from_trace(out.trace, stop_name(out.stop));
            r.atoms = out.state.rank();
            r
        }
        (Dataset::Multiclass { train, test }, _) => {
            let loss = MulticlassLogistic::new(train.clone());
            let (l0, w0) = apg_start(&loss);
            let eval = test.as_ref().unwrap_or(train);
            let metric = |w: &Array2<f64>| eval.accuracy(w);
            RunResult::from_apg(run_apg_tracked(&loss, TraceProx, lambda, l0, &w0, &apg_options(cfg)?, Some(&metric)))
        }
        (Dataset::Multiview { x, y, split, clean }, SolverKind::Gcg) => {
            let view_loss = view_loss(cfg)?;
            let clean_ref = clean.as_ref().map(|(a, b)| (a, b));
            let fit = solve_multiview_tracked(x, y, lambda, split, view_loss, &lowrank()?, clean_ref).map_err(|e| match e {
                gcg::multiview::MultiviewSolveError::Solver(f) => gcg_failure(f),
                other => RunError::solver(other),
            })?;
            let mut r = RunResult::from_trace(fit.output.trace.clone(), stop_name(fit.output.stop));
            r.atoms = fit.output.state.rank();
            r
        }
        (Dataset::Multiview { x, y, split, clean }, _) => {
            let opts = BcdOptions { rank: cfg.count("bcd.rank")?, outer_iters: cfg.count("bcd.outer_iters")?, seed: cfg.seed, ..Default::default() };
            let out = solve_bcd_multiview(x, y, lambda, split, view_loss(cfg)?, &opts).map_err(RunError::solver)?;
            let mut r = RunResult::from_trace(out.trace.clone(), "bcd");
            r.final_objective = out.objective;
            if let Some((cx, cy)) = clean {
                let err = |a: &Array2<f64>, b: &Array2<f64>| (a - b).iter().map(|d| d * d).sum::<f64>();
                r.final_test_metric = Some(err(&out.a.dot(&out.h), cx) + err(&out.b.dot(&out.h), cy));
            }
            r
        }
        (Dataset::GroupLasso { design, target, groups, truth }, solver) => {
            let loss = LinearLeastSquares::new(design.clone(), target.clone()).map_err(|e| RunError::Data(DataError::Parse { path: "data".into(), line: 1, message: e.to_string() }))?;
            let q = QExponent::new(cfg.get("q")?).map_err(|e| config_err("q", cfg.text("q"), e))?;
            let (mut r, w) = match solver {
                SolverKind::Gcg => {
                    let out = solve_structured_gcg(&loss, groups, lambda, q, &structured_options(cfg, groups.n())?).map_err(RunError::solver)?;
                    let w = out.w.clone();
                    (RunResult::from_trace(out.trace, stop_name(out.stop)), w)
                }
                _ => {
                    let plain_l1 = q == QExponent::ONE && groups.group_count() == groups.n() && groups.groups().iter().all(|g| g.len() == 1) && groups.costs().iter().all(|&c| c == 1.0);
                    if !plain_l1 {
                        return Err(ConfigError::Conflict { key: "solver".into(), message: "apg for group_lasso needs unit-cost singleton groups and q = 1".into() }.into());
                    }
                    let (l0, w0) = apg_start(&loss);
                    let out = run_apg_tracked(&loss, L1Prox, lambda, l0, &w0, &apg_options(cfg)?, None);
                    let w = out.w.clone();
                    (RunResult::from_apg(out), w)
                }
            };
            r.atoms = w.iter().filter(|v| **v != 0.0).count();
            if let Some(t) = truth {
                let norm = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.final_test_metric = Some(norm(&(&w - t)) / norm(t).max(f64::MIN_POSITIVE));
            }
            r.extra.insert("support_size".into(), json!(w.iter().filter(|v| **v != 0.0).count()));
            r
        }
        (Dataset::Cur { x, planted }, _) => {
            let gs_n = x.len();
            let out = solve_cur(x, lambda, &structured_options(cfg, gs_n)?).map_err(RunError::solver)?;
            let top = out.top_by_mass(cfg.count("cur.top")?);
            let mut r = RunResult::from_trace(out.output.trace.clone(), stop_name(out.output.stop));
            let label = |t: &CurIndex| match t {
                CurIndex::Row(i) => format!("row {}", i + 1),
                CurIndex::Col(j) => format!("col {}", j + 1),
            };
            r.extra.insert("top".into(), json!(top.iter().map(label).collect::<Vec<_>>()));
            r.extra.insert("selected_rows".into(), json!(out.selected_rows.len()));
            r.extra.insert("selected_cols".into(), json!(out.selected_cols.len()));
            if let Some((rows, cols)) = planted {
                let hits = top
                    .iter()
                    .filter(|t| match t {
                        CurIndex::Row(i) => rows.contains(i),
                        CurIndex::Col(j) => cols.contains(j),
                    })
                    .count();
                r.extra.insert("planted_hits".into(), json!(hits));
            }
            r
        }
    };
    if cfg.solver == SolverKind::Gcg && cfg.get::<bool>("improve")? {
        result.extra.insert("monotone".into(), json!(result.monotone()));
    }
    Ok(result)
}

fn view_loss(cfg: &ExperimentConfig) -> Result<ViewLoss, ConfigError> {
    match cfg.text("view_loss") {
        "smoothed_l1" => Ok(ViewLoss::SmoothedL1),
        "squared" => Ok(ViewLoss::Squared),
        other => Err(ConfigError::invalid("view_loss", other, "expected smoothed_l1 or squared")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_raw(&RawConfig::parse(text, "t").unwrap()).unwrap()
    }

    #[test]
    fn holdout_is_disjoint_and_seeded() {
        let all = TripletMatrix::new(5, 5, (0..20).map(|k| (k / 5, k % 5, k as f64)).collect()).unwrap();
        let a = holdout(&all, 0.25, 3);
        assert_eq!(a.test().unwrap().nnz(), 5);
        assert_eq!(a.train().nnz(), 15);
        assert_eq!(a.train(), holdout(&all, 0.25, 3).train());
        assert!(holdout(&all, 0.0, 3).test().is_none());
    }

    #[test]
    fn every_task_runs_on_small_synthetic_data() {
        let cases = [
            "task = matrix_completion\nlambda = 1\nsynth.rows = 12\nsynth.cols = 10\nmax_iters = 5",
            "task = multiclass\nlambda = 1\nsynth.features = 6\nsynth.train = 30\nsynth.test = 10\nmax_iters = 5",
            "task = multiview\nlambda = 1\nsplit.n1 = 5\nsynth.n2 = 6\nsynth.m = 8\nmax_iters = 5",
            "task = group_lasso\nlambda = 1\nsynth.examples = 20\nsynth.features = 12\nsynth.group_size = 3\nmax_iters = 5",
            "task = cur\nlambda = 1\nsynth.rows = 8\nsynth.cols = 9\nsynth.k = 2\nmax_iters = 3",
        ];
        for text in cases {
            let cfg = config(text);
            let data = load_dataset(&cfg).unwrap();
            let r = run_solver(&cfg, &data).unwrap();
            assert!(r.final_objective.is_finite(), "{text}");
            assert!(r.trace.len() >= 2, "{text}");
            assert_eq!(r.extra.get("monotone"), Some(&json!(true)), "{text}");
        }
    }

    #[test]
    fn baselines_dispatch() {
        for text in [
            "task = matrix_completion\nlambda = 1\nsolver = apg\nsynth.rows = 12\nsynth.cols = 10\napg.max_iters = 50",
            "task = multiview\nlambda = 1\nsolver = bcd\nsplit.n1 = 5\nsynth.n2 = 6\nsynth.m = 8\nbcd.outer_iters = 5",
            "task = group_lasso\nlambda = 1\nsolver = apg\nsynth.features = 8\nsynth.group_size = 1\napg.max_iters = 50",
        ] {
            let cfg = config(text);
            let r = run_solver(&cfg, &load_dataset(&cfg).unwrap()).unwrap();
            assert!(r.final_objective.is_finite(), "{text}");
        }
        let cfg = config("task = group_lasso\nlambda = 1\nsolver = apg\nsynth.features = 8\nsynth.group_size = 2");
        assert!(matches!(run_solver(&cfg, &load_dataset(&cfg).unwrap()), Err(RunError::Config(ConfigError::Conflict { .. }))));
    }
}
