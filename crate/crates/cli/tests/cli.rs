use std::path::Path;
use std::process::{Command, Output};

fn gcg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcg")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const MC: &str = "task = matrix_completion\nlambda = 0.5\nsynth.rows = 30\nsynth.cols = 20\nsynth.obs_frac = 0.5\nmax_iters = 15\nseed = 3\n";

#[test]
fn matrix_completion_trace_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "mc.cfg", MC);
    for out in ["a", "b"] {
        let o = gcg(&["run", "--config", "mc.cfg", "--out-dir", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("a/trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/trace.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("iter,time_s,objective,rho,eta,theta,atoms,gap,test_metric\n0,,"));

    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    for key in ["final_objective", "final_test_metric", "iterations", "wall_time_s", "atoms", "config", "version"] {
        assert!(!summary[key].is_null(), "missing {key}");
    }
    assert_eq!(summary["config"]["lambda"], "0.5");
    assert_eq!(summary["monotone"], true);
}

#[test]
fn malformed_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.cfg", "task = matrix_completion\nlambda = 0.5\nmax_iters = many\n");
    let o = gcg(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`max_iters`"), "{}", String::from_utf8_lossy(&o.stderr));

    let o = gcg(&["run", "--set", "task=cur", "--set", "lambda=1", "--set", "split.beta=2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`split.beta`"));

    let o = gcg(&["run", "--set", "task=cur"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`lambda`"));
}

#[test]
fn compare_reports_both_traces_and_the_final_gap() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "mc.cfg", MC);
    let o = gcg(&["compare", "--config", "mc.cfg", "--set", "max_iters=60", "--set", "rel_obj_tol=0"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("|ΔF_final|"));
    assert!(dir.path().join("trace_gcg.csv").exists() && dir.path().join("trace_apg.csv").exists());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary_compare.json")).unwrap()).unwrap();
    let rel = report["relative_delta_final_objective"].as_f64().unwrap();
    assert!(rel < 1e-3, "{rel}");
}

#[test]
fn synthesized_ratings_load_back_through_a_data_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "mc.cfg", MC);
    let o = gcg(&["synth", "--config", "mc.cfg", "--out-dir", "data"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = gcg(&["run", "--set", "task=matrix_completion", "--set", "lambda=0.5", "--set", "data=data/train.txt", "--set", "max_iters=5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = gcg(&["run", "--set", "task=matrix_completion", "--set", "lambda=0.5", "--set", "data=missing.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn polar_subcommand_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "m.txt", "3 0\n0 -4\n");
    let o = gcg(&["polar", "--gauge", "trace", "--matrix", "m.txt"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 4.0).abs() < 1e-10);

    let o = gcg(&["polar", "--gauge", "structured", "--matrix", "m.txt"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 4.0).abs() < 1e-12, "{v}");
    assert_eq!(v["support"], serde_json::json!([4]));
}
