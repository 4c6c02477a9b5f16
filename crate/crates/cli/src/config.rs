//! Flat `key = value` experiment configuration.
//!
//! Values are layered: per-task defaults, then the config file, then `--set`
//! overrides. Every error names the offending key so it can be fixed in place.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{file}:{line}: expected `key = value`, got `{text}`")]
    Syntax { file: String, line: usize, text: String },
    #[error("`{key}`: unknown key for task {task}")]
    UnknownKey { key: String, task: String },
    #[error("`{key}`: {message} (got `{value}`)")]
    Invalid { key: String, value: String, message: String },
    #[error("`{0}`: required but not set")]
    Missing(String),
    #[error("`{key}`: {message}")]
    Conflict { key: String, message: String },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    pub fn invalid(key: &str, value: &str, message: impl Into<String>) -> Self {
        Self::Invalid { key: key.into(), value: value.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    MatrixCompletion,
    Multiclass,
    Multiview,
    GroupLasso,
    Cur,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::MatrixCompletion => "matrix_completion",
            Task::Multiclass => "multiclass",
            Task::Multiview => "multiview",
            Task::GroupLasso => "group_lasso",
            Task::Cur => "cur",
        }
    }

    fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Task::MatrixCompletion => &[
                ("synth.rows", "100"),
                ("synth.cols", "80"),
                ("synth.rank", "3"),
                ("synth.obs_frac", "0.3"),
                ("synth.noise", "0.01"),
                ("data.test_frac", "0.25"),
                ("apg.max_iters", "3000"),
                ("apg.tol", "1e-8"),
            ],
            Task::Multiclass => &[
                ("synth.features", "20"),
                ("synth.classes", "5"),
                ("synth.train", "200"),
                ("synth.test", "100"),
                ("synth.rank", "2"),
                ("synth.noise", "0.5"),
                ("apg.max_iters", "3000"),
                ("apg.tol", "1e-8"),
            ],
            Task::Multiview => &[
                ("split.n1", "80"),
                ("split.beta", "1"),
                ("split.gamma", "5"),
                ("view_loss", "smoothed_l1"),
                ("synth.n2", "100"),
                ("synth.t_star", "5"),
                ("synth.m", "50"),
                ("synth.corrupt", "0.15"),
                ("bcd.rank", "5"),
                ("bcd.outer_iters", "200"),
            ],
            Task::GroupLasso => &[
                ("q", "1"),
                ("oracle", "smoothed"),
                ("polar.eps", "1e-3"),
                ("polar.relative", "false"),
                ("groups", ""),
                ("synth.examples", "50"),
                ("synth.features", "40"),
                ("synth.group_size", "4"),
                ("synth.active", "2"),
                ("synth.noise", "0.01"),
                ("apg.max_iters", "20000"),
                ("apg.tol", "1e-12"),
            ],
            Task::Cur => &[
                ("oracle", "smoothed"),
                ("polar.eps", "1e-2"),
                ("polar.relative", "true"),
                ("cur.top", "10"),
                ("synth.rows", "40"),
                ("synth.cols", "60"),
                ("synth.k", "5"),
                ("synth.boost", "5"),
                ("synth.noise", "0.01"),
            ],
        }
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "matrix_completion" => Task::MatrixCompletion,
            "multiclass" => Task::Multiclass,
            "multiview" => Task::Multiview,
            "group_lasso" => Task::GroupLasso,
            "cur" => Task::Cur,
            _ => return Err("expected one of matrix_completion, multiclass, multiview, group_lasso, cur".into()),
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Gcg,
    Apg,
    Bcd,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Gcg => "gcg",
            SolverKind::Apg => "apg",
            SolverKind::Bcd => "bcd",
        }
    }
}

impl FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gcg" => Ok(SolverKind::Gcg),
            "apg" => Ok(SolverKind::Apg),
            "bcd" => Ok(SolverKind::Bcd),
            _ => Err("expected one of gcg, apg, bcd".into()),
        }
    }
}

/// Keys every task accepts, with their defaults. An empty default means unset.
const COMMON: &[(&str, &str)] = &[
    ("task", ""),
    ("data", "synth"),
    ("data.delimiter", "whitespace"),
    ("lambda", ""),
    ("solver", "gcg"),
    ("step_rule", "joint"),
    ("improve", "true"),
    ("seed", "0"),
    ("synth.seed", ""),
    ("max_iters", "200"),
    ("time_budget_s", "600"),
    ("rel_obj_tol", "1e-8"),
    ("track_gap", "true"),
    ("record_time", "false"),
    ("out.trace", "trace.csv"),
    ("out.summary", "summary.json"),
    ("compare.against", ""),
];

/// A layered flat configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    /// Where each explicitly set key came from, for messages.
    origin: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self { values: BTreeMap::new(), origin: BTreeMap::new() }
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str, file: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .filter(|(key, _)| !key.trim().is_empty())
                .ok_or_else(|| ConfigError::Syntax { file: file.into(), line: k + 1, text: line.into() })?;
            raw.set(key.trim(), value.trim(), format!("{file}:{}", k + 1));
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str, origin: impl Into<String>) {
        self.values.insert(key.to_string(), value.to_string());
        self.origin.insert(key.to_string(), origin.into());
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair
            .split_once('=')
            .filter(|(key, _)| !key.trim().is_empty())
            .ok_or_else(|| ConfigError::Syntax { file: "--set".into(), line: 1, text: pair.into() })?;
        self.set(key.trim(), value.trim(), "--set");
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

impl Default for RawConfig {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth { seed: u64 },
    File { path: PathBuf, delimiter: Delimiter },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Whitespace,
    Char(char),
}

impl Delimiter {
    pub fn split<'a>(self, line: &'a str) -> Box<dyn Iterator<Item = &'a str> + 'a> {
        match self {
            Delimiter::Whitespace => Box::new(line.split_whitespace()),
            Delimiter::Char(c) => Box::new(line.split(c).map(str::trim)),
        }
    }

    pub fn join(self) -> char {
        match self {
            Delimiter::Whitespace => ' ',
            Delimiter::Char(c) => c,
        }
    }
}

impl FromStr for Delimiter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "whitespace" | "" => Ok(Delimiter::Whitespace),
            "tab" => Ok(Delimiter::Char('\t')),
            "comma" => Ok(Delimiter::Char(',')),
            _ => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(Delimiter::Char(c)),
                    _ => Err("expected whitespace, tab, comma or a single character".into()),
                }
            }
        }
    }
}

/// A validated configuration. `raw` is the merged key set echoed into reports.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: DataSource,
    pub lambda: f64,
    pub solver: SolverKind,
    pub seed: u64,
    pub record_time: bool,
    pub trace_file: String,
    pub summary_file: String,
    merged: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let task_text = raw.get("task").filter(|t| !t.is_empty()).ok_or_else(|| ConfigError::Missing("task".into()))?;
        let task: Task = parse_value("task", task_text)?;
        let mut merged: BTreeMap<String, String> = COMMON.iter().chain(task.defaults()).map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (key, value) in &raw.values {
            if !merged.contains_key(key) {
                return Err(ConfigError::UnknownKey { key: key.clone(), task: task.name().into() });
            }
            merged.insert(key.clone(), value.clone());
        }
        let mut cfg = Self {
            task,
            data: DataSource::Synth { seed: 0 },
            lambda: 0.0,
            solver: SolverKind::Gcg,
            seed: 0,
            record_time: false,
            trace_file: String::new(),
            summary_file: String::new(),
            merged,
        };
        cfg.lambda = cfg.require("lambda")?;
        if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
            return Err(ConfigError::invalid("lambda", cfg.text("lambda"), "must be a finite positive number"));
        }
        cfg.seed = cfg.get("seed")?;
        cfg.solver = cfg.get("solver")?;
        cfg.record_time = cfg.get("record_time")?;
        cfg.trace_file = cfg.text("out.trace").to_string();
        cfg.summary_file = cfg.text("out.summary").to_string();
        cfg.data = match cfg.text("data") {
            "synth" => {
                let seed = match cfg.text("synth.seed") {
                    "" => cfg.seed,
                    _ => cfg.get("synth.seed")?,
                };
                DataSource::Synth { seed }
            }
            path => {
                if let Some(key) = raw.values.keys().find(|k| k.starts_with("synth.")) {
                    return Err(ConfigError::Conflict { key: key.clone(), message: "synthetic settings conflict with a data file; set data = synth or drop this key".into() });
                }
                DataSource::File { path: PathBuf::from(path), delimiter: cfg.get("data.delimiter")? }
            }
        };
        cfg.check_solver()?;
        Ok(cfg)
    }

    fn check_solver(&self) -> Result<(), ConfigError> {
        let ok = match self.solver {
            SolverKind::Gcg => true,
            SolverKind::Apg => matches!(self.task, Task::MatrixCompletion | Task::Multiclass | Task::GroupLasso),
            SolverKind::Bcd => self.task == Task::Multiview,
        };
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Conflict { key: "solver".into(), message: format!("{} is not available for task {}", self.solver.name(), self.task) })
        }
    }

    /// The raw merged text of a key known to the task.
    pub fn text(&self, key: &str) -> &str {
        self.merged.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` is not declared for task {}", self.task))
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.text(key).is_empty()
    }

    /// Parses a key, reporting the key path on failure.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        parse_value(key, self.text(key))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        if self.is_set(key) {
            self.get(key)
        } else {
            Err(ConfigError::Missing(key.into()))
        }
    }

    /// A positive integer key.
    pub fn count(&self, key: &str) -> Result<usize, ConfigError> {
        let v: usize = self.get(key)?;
        if v == 0 {
            return Err(ConfigError::invalid(key, self.text(key), "must be positive"));
        }
        Ok(v)
    }

    /// A finite nonnegative real key.
    pub fn nonneg(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConfigError::invalid(key, self.text(key), "must be a finite nonnegative number"));
        }
        Ok(v)
    }

    /// A finite positive real key.
    pub fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.nonneg(key)?;
        if v == 0.0 {
            return Err(ConfigError::invalid(key, self.text(key), "must be positive"));
        }
        Ok(v)
    }

    /// The same configuration with another solver, as used by compare mode.
    pub fn with_solver(&self, solver: SolverKind) -> Result<Self, ConfigError> {
        let mut next = self.clone();
        next.solver = solver;
        next.merged.insert("solver".into(), solver.name().into());
        next.check_solver()?;
        Ok(next)
    }

    /// Every effective key and value.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.merged
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::invalid(key, value, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_raw(&RawConfig::parse(text, "test.cfg")?)
    }

    #[test]
    fn defaults_fill_in_and_overrides_win() {
        let mut raw = RawConfig::parse("task = matrix_completion\nlambda = 0.5\n# comment\n\nmax_iters = 10\n", "a").unwrap();
        raw.apply_override("max_iters=20").unwrap();
        let c = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!(c.task, Task::MatrixCompletion);
        assert_eq!(c.get::<usize>("max_iters").unwrap(), 20);
        assert_eq!(c.text("synth.rows"), "100");
        assert_eq!(c.data, DataSource::Synth { seed: 0 });
    }

    #[test]
    fn errors_name_the_field() {
        let err = cfg("task = cur\nlambda = 1\nmax_iters = ten\n").unwrap().get::<usize>("max_iters").unwrap_err();
        assert!(err.to_string().starts_with("`max_iters`:"), "{err}");
        assert_eq!(cfg("task = cur\n").unwrap_err(), ConfigError::Missing("lambda".into()));
        assert!(matches!(cfg("task = cur\nlambda = 1\nsplit.n1 = 3\n").unwrap_err(), ConfigError::UnknownKey { key, .. } if key == "split.n1"));
        assert!(matches!(cfg("task = cur\nlambda = -1\n").unwrap_err(), ConfigError::Invalid { key, .. } if key == "lambda"));
        assert!(matches!(cfg("task = cur\nlambda = 1\njunk\n").unwrap_err(), ConfigError::Syntax { line: 3, .. }));
        assert!(matches!(cfg("task = cur\nlambda = 1\nsolver = apg\n").unwrap_err(), ConfigError::Conflict { key, .. } if key == "solver"));
    }

    #[test]
    fn file_data_excludes_synth_keys() {
        let err = cfg("task = cur\nlambda = 1\ndata = x.txt\nsynth.k = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Conflict { key, .. } if key == "synth.k"));
        let c = cfg("task = cur\nlambda = 1\ndata = x.txt\ndata.delimiter = comma\n").unwrap();
        assert_eq!(c.data, DataSource::File { path: "x.txt".into(), delimiter: Delimiter::Char(',') });
    }

    #[test]
    fn synth_seed_defaults_to_the_solver_seed() {
        assert_eq!(cfg("task = cur\nlambda = 1\nseed = 4\n").unwrap().data, DataSource::Synth { seed: 4 });
        assert_eq!(cfg("task = cur\nlambda = 1\nseed = 4\nsynth.seed = 9\n").unwrap().data, DataSource::Synth { seed: 9 });
    }
}
