//! Trace CSV and summary JSON emission.

use std::fmt::Write as _;

use gcg::gcg::SolverTrace;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::tasks::RunResult;

pub const TRACE_HEADER: &str = "iter,time_s,objective,rho,eta,theta,atoms,gap,test_metric";

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

/// One row per iteration. `time_s` stays empty unless `record_time`, so
/// identical runs produce identical bytes.
pub fn trace_csv(trace: &SolverTrace, record_time: bool) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace.records() {
        let time = if record_time { num(r.time_s) } else { String::new() };
        let gap = r.gap.map(num).unwrap_or_default();
        let metric = r.test_metric.map(num).unwrap_or_default();
        writeln!(out, "{},{time},{},{},{},{},{},{gap},{metric}", r.iter, num(r.objective), num(r.rho), num(r.eta), num(r.theta), r.atoms).expect("write to string");
    }
    out
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn summary_json(cfg: &ExperimentConfig, result: &RunResult, wall_time_s: f64) -> Value {
    let mut summary = json!({
        "task": cfg.task.name(),
        "solver": cfg.solver.name(),
        "final_objective": finite(result.final_objective),
        "final_test_metric": result.final_test_metric.map_or(Value::Null, finite),
        "iterations": result.trace.last().map_or(0, |r| r.iter),
        "wall_time_s": wall_time_s,
        "atoms": result.atoms,
        "stop": result.stop,
        "config": cfg.echo(),
        "version": gcg::VERSION,
    });
    let map = summary.as_object_mut().expect("object literal");
    for (k, v) in &result.extra {
        map.insert(k.clone(), v.clone());
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcg::gcg::IterRecord;

    #[test]
    fn csv_columns_and_empty_fields() {
        let mut t = SolverTrace::new();
        let rec = |iter, gap| IterRecord { iter, time_s: 0.5, objective: 2.0, rho: 0.0, eta: 0.0, theta: 0.0, atoms: 0, gap, test_metric: None };
        t.push(rec(0, Some(f64::INFINITY)));
        t.push(rec(1, None));
        let csv = trace_csv(&t, false);
        assert_eq!(csv, format!("{TRACE_HEADER}\n0,,2e0,0e0,0e0,0e0,0,inf,\n1,,2e0,0e0,0e0,0e0,0,,\n"));
        assert!(trace_csv(&t, true).contains("\n0,5e-1,"));
    }
}
