//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcg::lowrank::trace_polar;
use gcg::multiview::{multiview_polar, ViewSplit};
use gcg::numkit::PowerOptions;
use gcg::structsparse::{group_polar_smoothed, polar_bruteforce, recover_integral_support, GroupStructure, QExponent, SmoothedPolar, ENUMERATION_GUARD};
use serde_json::{json, Value};

use crate::config::{ConfigError, DataSource, Delimiter, ExperimentConfig, RawConfig, SolverKind, Task};
use crate::data::{load_dense, write_dense, write_labeled, write_triplets, DataError};
use crate::report::{summary_json, trace_csv};
use crate::tasks::{load_dataset, run_solver, synthesize, Dataset, RunError, RunResult};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "gcg", version, about = "Generalized conditional gradient experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solver and write its trace and summary.
    Run(ExperimentArgs),
    /// Run GCG and a baseline on the same data and report the gap between them.
    Compare {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Baseline solver; defaults to apg, or bcd for multiview.
        #[arg(long)]
        against: Option<String>,
    },
    /// Evaluate one polar on a matrix file and print it as JSON.
    Polar(PolarArgs),
    /// Write the synthetic dataset a config describes.
    Synth(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Gauge {
    Trace,
    Multiview,
    Structured,
}

#[derive(Debug, Args)]
pub struct PolarArgs {
    #[arg(long, value_enum)]
    pub gauge: Gauge,
    /// Dense matrix, one row per line. Structured gauges read it row-major as a vector.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value = "whitespace")]
    pub delimiter: Delimiter,
    /// Rows of the first view.
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Group file for structured gauges; singletons when omitted.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    /// Smoothing width when the problem is too large to enumerate.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Run(RunError::Config(e))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Run(RunError::Data(e))
    }
}

pub fn execute(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::Run(args) => run(&args),
        Command::Compare { args, against } => compare(&args, against.as_deref()),
        Command::Polar(args) => polar(&args),
        Command::Synth(args) => synth(&args),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = match &e {
                CliError::Run(RunError::Config(_) | RunError::Data(_)) => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            };
            let kind = if code == EXIT_CONFIG { "config error" } else { "error" };
            eprintln!("gcg: {kind}: {e}");
            code
        }
    }
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::new(),
    };
    for pair in &args.set {
        raw.apply_override(pair)?;
    }
    if let Some(seed) = args.seed {
        raw.set("seed", &seed.to_string(), "--seed");
    }
    ExperimentConfig::from_raw(&raw)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.display().to_string(), message: e.to_string() })?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Output { path: path.display().to_string(), message: e.to_string() })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// `trace.csv` with tag `apg` becomes `trace_apg.csv`.
fn tagged(file: &str, tag: &str) -> String {
    match file.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_{tag}.{ext}"),
        None => format!("{file}_{tag}"),
    }
}

fn warn_about(data: &Dataset) {
    if let Dataset::Ratings { duplicates, .. } = data {
        if *duplicates > 0 {
            eprintln!("gcg: warning: {duplicates} repeated (user, item) pairs; kept the last rating of each");
        }
    }
}

/// Runs the solver, timing only the solve. A failed solve still leaves its partial trace behind.
fn solve_and_write(cfg: &ExperimentConfig, data: &Dataset, out_dir: &Path, trace_file: &str) -> Result<(RunResult, f64), CliError> {
    let start = Instant::now();
    match run_solver(cfg, data) {
        Ok(result) => {
            let wall = start.elapsed().as_secs_f64();
            write_file(&out_dir.join(trace_file), &trace_csv(&result.trace, cfg.record_time))?;
            if result.extra.get("monotone") == Some(&Value::Bool(false)) {
                eprintln!("gcg: warning: objective increased during a run with local improvement");
            }
            Ok((result, wall))
        }
        Err(RunError::Solver { message, partial }) => {
            if let Some(p) = &partial {
                write_file(&out_dir.join(trace_file), &trace_csv(&p.trace, cfg.record_time))?;
            }
            Err(RunError::Solver { message, partial }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn run(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let data = load_dataset(&cfg)?;
    warn_about(&data);
    let (result, wall) = solve_and_write(&cfg, &data, &args.out_dir, &cfg.trace_file)?;
    let summary = summary_json(&cfg, &result, wall);
    write_file(&args.out_dir.join(&cfg.summary_file), &pretty(&summary))?;
    println!(
        "{} {}: objective {} after {} iterations, {} atoms",
        cfg.task,
        cfg.solver.name(),
        result.final_objective,
        result.trace.last().map_or(0, |r| r.iter),
        result.atoms
    );
    Ok(())
}

fn compare(args: &ExperimentArgs, against: Option<&str>) -> Result<(), CliError> {
    let base = load_config(args)?;
    let other: SolverKind = match against.filter(|s| !s.is_empty()).or(Some(base.text("compare.against")).filter(|s| !s.is_empty())) {
        Some(name) => name.parse().map_err(|e: String| ConfigError::invalid("compare.against", name, e))?,
        None if base.task == Task::Multiview => SolverKind::Bcd,
        None => SolverKind::Apg,
    };
    if other == SolverKind::Gcg {
        return Err(ConfigError::invalid("compare.against", "gcg", "must name a baseline").into());
    }
    let gcg_cfg = base.with_solver(SolverKind::Gcg)?;
    let other_cfg = base.with_solver(other).map_err(|e| match e {
        ConfigError::Conflict { message, .. } => ConfigError::Conflict { key: "compare.against".into(), message },
        e => e,
    })?;
    let data = load_dataset(&base)?;
    warn_about(&data);
    let mut summaries = Vec::new();
    let mut finals = Vec::new();
    for cfg in [&gcg_cfg, &other_cfg] {
        let file = tagged(&cfg.trace_file, cfg.solver.name());
        let (result, wall) = solve_and_write(cfg, &data, &args.out_dir, &file)?;
        println!("{}: objective {} after {} iterations (trace {file})", cfg.solver.name(), result.final_objective, result.trace.last().map_or(0, |r| r.iter));
        finals.push(result.final_objective);
        summaries.push(summary_json(cfg, &result, wall));
    }
    let delta = (finals[0] - finals[1]).abs();
    let relative = delta / finals[1].abs().max(f64::MIN_POSITIVE);
    println!("|ΔF_final| = {delta:e} (relative {relative:e})");
    let report = json!({
        "gcg": summaries[0],
        other.name(): summaries[1],
        "delta_final_objective": delta,
        "relative_delta_final_objective": relative,
    });
    write_file(&args.out_dir.join(tagged(&base.summary_file, "compare")), &pretty(&report))?;
    Ok(())
}

fn write_groups(path: &Path, gs: &GroupStructure) -> Result<(), CliError> {
    let mut out = String::new();
    for (members, cost) in gs.groups().iter().zip(gs.costs()) {
        let ids: Vec<String> = members.iter().map(|i| (i + 1).to_string()).collect();
        writeln!(out, "{cost}: {}", ids.join(" ")).expect("write to string");
    }
    write_file(path, &out)
}

fn synth(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let DataSource::Synth { seed } = cfg.data else {
        return Err(ConfigError::Conflict { key: "data".into(), message: "synth needs data = synth".into() }.into());
    };
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.display().to_string(), message: e.to_string() })?;
    let d = Delimiter::Whitespace;
    let mut written = Vec::new();
    let mut file = |name: &str| {
        written.push(name.to_string());
        dir.join(name)
    };
    match synthesize(&cfg, seed)? {
        Dataset::Ratings { observations, .. } => {
            write_triplets(&file("train.txt"), observations.train(), d)?;
            if let Some(test) = observations.test() {
                write_triplets(&file("test.txt"), test, d)?;
            }
        }
        Dataset::Multiclass { train, test } => {
            write_labeled(&file("train.txt"), &train, d)?;
            if let Some(test) = test {
                write_labeled(&file("test.txt"), &test, d)?;
            }
        }
        Dataset::Multiview { x, y, clean, .. } => {
            write_dense(&file("views.txt"), &ndarray::concatenate![ndarray::Axis(0), x, y], d)?;
            if let Some((cx, cy)) = clean {
                write_dense(&file("clean.txt"), &ndarray::concatenate![ndarray::Axis(0), cx, cy], d)?;
            }
        }
        Dataset::GroupLasso { design, target, groups, truth } => {
            write_dense(&file("data.txt"), &ndarray::concatenate![ndarray::Axis(1), target, design], d)?;
            write_groups(&file("groups.txt"), &groups)?;
            if let Some(t) = truth {
                write_dense(&file("truth.txt"), &t, d)?;
            }
        }
        Dataset::Cur { x, planted } => {
            write_dense(&file("x.txt"), &x, d)?;
            if let Some((rows, cols)) = planted {
                let mut text = String::new();
                rows.iter().for_each(|i| writeln!(text, "row {}", i + 1).expect("write to string"));
                cols.iter().for_each(|j| writeln!(text, "col {}", j + 1).expect("write to string"));
                write_file(&file("planted.txt"), &text)?;
            }
        }
    }
    println!("{}", written.iter().map(|f| dir.join(f).display().to_string()).collect::<Vec<_>>().join("\n"));
    Ok(())
}

fn polar(args: &PolarArgs) -> Result<(), CliError> {
    let m = load_dense(&args.matrix, args.delimiter)?;
    let bad = |key: &str, value: String, e: &dyn std::fmt::Display| CliError::from(ConfigError::invalid(key, &value, e.to_string()));
    let report = match args.gauge {
        Gauge::Trace => {
            let p = trace_polar(&m, &PowerOptions { seed: args.seed, ..Default::default() }).map_err(|e| CliError::Run(RunError::Solver { message: e.to_string(), partial: None }))?;
            json!({ "gauge": "trace", "value": p.value })
        }
        Gauge::Multiview => {
            let n1 = args.n1.ok_or_else(|| CliError::from(ConfigError::Missing("--n1".into())))?;
            if n1 == 0 || n1 >= m.nrows() {
                return Err(bad("--n1", n1.to_string(), &format!("must lie in 1..{}", m.nrows())));
            }
            let split = ViewSplit::new(n1, m.nrows() - n1, args.beta, args.gamma).map_err(|e| bad("--beta", args.beta.to_string(), &e))?;
            let p = multiview_polar(&m, &split).map_err(|e| CliError::Run(RunError::Solver { message: e.to_string(), partial: None }))?;
            json!({ "gauge": "multiview", "value": p.value, "attained": p.attained, "mu": p.mu })
        }
        Gauge::Structured => {
            let g: Vec<f64> = m.iter().copied().collect();
            let n = g.len();
            let gs = match &args.groups {
                Some(path) => GroupStructure::load(n, path).map_err(|e| bad("--groups", path.display().to_string(), &e))?,
                None => GroupStructure::singletons(n),
            };
            let q = QExponent::new(args.q).map_err(|e| bad("--q", args.q.to_string(), &e))?;
            let one_based = |s: &[usize]| s.iter().map(|i| i + 1).collect::<Vec<_>>();
            if n <= ENUMERATION_GUARD {
                let (value, support) = polar_bruteforce(&g, &gs, q).map_err(|e| bad("--matrix", args.matrix.display().to_string(), &e))?;
                json!({ "gauge": "structured", "method": "enumeration", "value": value, "support": one_based(&support) })
            } else {
                if !(args.eps > 0.0) {
                    return Err(bad("--eps", args.eps.to_string(), &"must be positive"));
                }
                let sol = group_polar_smoothed(&g, &gs, q, &SmoothedPolar { eps: args.eps, ..Default::default() });
                let lifted: Vec<f64> = g.iter().map(|&x| q.lift(x)).collect();
                let rec = recover_integral_support(&sol.w_tilde, &lifted, &gs, sol.lambda_eps, sol.eps)
                    .map_err(|e| CliError::Run(RunError::Solver { message: e.to_string(), partial: None }))?;
                json!({
                    "gauge": "structured",
                    "method": "smoothed",
                    "value": q.root(rec.value),
                    "upper_bound": q.root(sol.upper),
                    "support": one_based(&rec.support),
                })
            }
        }
    };
    print!("{}", pretty(&report));
    Ok(())
}
