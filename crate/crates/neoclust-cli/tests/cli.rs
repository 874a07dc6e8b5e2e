//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn neoclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neoclust"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_blobs_csv(dir: &Path) -> PathBuf {
    // two tight blobs of four points each, one overlap candidate between
    let mut text = String::new();
    for i in 0..4 {
        text.push_str(&format!("0.{i},0.{i}\n"));
        text.push_str(&format!("5.{i},5.{i}\n"));
    }
    let path = dir.join("X.csv");
    fs::write(&path, text).unwrap();
    path
}

fn karate() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/karate.txt")
}

#[test]
fn cluster_run_writes_all_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs_csv(dir.path());
    let out = dir.path().join("clusters.txt");
    let trace = dir.path().join("t.csv");
    let metrics = dir.path().join("m.csv");
    let args = [
        "cluster",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
        "--method",
        "palm",
        "--tol",
        "1e-3",
        "--seed",
        "7",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
    ];
    let run = neoclust(&args);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("method: palm"));

    let clusters = fs::read_to_string(&out).unwrap();
    assert_eq!(clusters.lines().count(), 2);
    for field in clusters.split_whitespace() {
        let id: usize = field.parse().unwrap();
        assert!((1..=8).contains(&id), "id {id} out of range");
    }
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("iter,wall_seconds,sdp_objective,infeasibility,sigma,inner_evals"));
    let metrics_text = fs::read_to_string(&metrics).unwrap();
    assert!(metrics_text.starts_with("trial,method,status"));

    // bit-identical assignment output on a repeated run
    let out2 = dir.path().join("clusters2.txt");
    let mut args2: Vec<&str> = args.to_vec();
    let pos = args2.iter().position(|a| *a == out.to_str().unwrap()).unwrap();
    args2[pos] = out2.to_str().unwrap();
    assert!(neoclust(&args2).status.success());
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn community_karate_admm_trace_ends_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("karate.csv");
    let karate = karate();
    let run = neoclust(&[
        "community",
        "--graph",
        karate.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
        "--method",
        "admm",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&trace).unwrap();
    let last = text.lines().last().unwrap();
    let infeas: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!(infeas < 1e-3, "final trace infeasibility {infeas}");
}

#[test]
fn race_emits_one_trace_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs_csv(dir.path());
    let traces = dir.path().join("traces");
    let run = neoclust(&[
        "race",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
        "--methods",
        "alm,palm",
        "--trace-dir",
        traces.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    for method in ["alm", "palm"] {
        let text = fs::read_to_string(traces.join(format!("trace-{method}.csv"))).unwrap();
        assert!(text.lines().count() > 1, "{method} trace has no rows");
    }
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("method: alm") && stdout.contains("method: palm"));
}

#[test]
fn trials_emit_per_trial_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs_csv(dir.path());
    let metrics = dir.path().join("m.csv");
    let run = neoclust(&[
        "cluster",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.0",
        "--beta",
        "0.0",
        "--method",
        "iterative",
        "--trials",
        "3",
        "--metrics",
        metrics.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("neo_objective_median"));
    assert!(stdout.contains("wall_seconds_q3"));
    let text = fs::read_to_string(&metrics).unwrap();
    assert_eq!(text.lines().count(), 4, "header plus one row per trial");
}

#[test]
fn ground_truth_produces_f1() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs_csv(dir.path());
    // rows interleave the blobs: odd ids are blob one, even ids blob two
    let truth = dir.path().join("truth.txt");
    fs::write(&truth, "1 3 5 7\n2 4 6 8\n").unwrap();
    let run = neoclust(&[
        "cluster",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.0",
        "--beta",
        "0.0",
        "--truth",
        truth.to_str().unwrap(),
        "--method",
        "iterative",
    ]);
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("f1: 1.0000"), "stdout: {stdout}");
}

#[test]
fn missing_input_fails_with_nonzero_exit() {
    let run = neoclust(&[
        "cluster",
        "--data",
        "/nonexistent/X.csv",
        "--k",
        "2",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
    ]);
    assert!(!run.status.success());
    let stderr = String::from_utf8(run.stderr).unwrap();
    assert!(stderr.contains("error"), "stderr: {stderr}");
}

#[test]
fn iterative_method_skips_trace_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_blobs_csv(dir.path());
    let trace = dir.path().join("t.csv");
    let run = neoclust(&[
        "cluster",
        "--data",
        data.to_str().unwrap(),
        "--k",
        "2",
        "--alpha",
        "0.0",
        "--beta",
        "0.0",
        "--method",
        "iterative",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(run.status.success());
    assert!(!trace.exists());
    let stderr = String::from_utf8(run.stderr).unwrap();
    assert!(stderr.contains("no solver trace"), "stderr: {stderr}");
}
