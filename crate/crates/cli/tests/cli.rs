use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use dvrptw::instance::load_instance;
use dvrptw::learning::{ModelKind, PrizeModel};
use dvrptw::rng::derive_seed;
use dvrptw::pchgs::{brute_force_solve, PcSolutionRecord};
use dvrptw_cli::static_pc_instance;

fn dvrptw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvrptw")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dvrptw(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_json(path: &Path, v: &Value) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_path_buf()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let cfg = write_json(&dir.join(format!("{name}_gen.json")), &json!({
        "name": name, "n_customers": n, "tw_width_range": [1800, 3600]
    }));
    let out = dir.join(format!("{name}.json"));
    ok(&["gen-instance", "--config", s(&cfg), "--seed", &seed.to_string(), "--out", s(&out)]);
    out
}

#[test]
fn gen_instance_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a", 12, 5);
    let b = gen(dir.path(), "b", 12, 5);
    let inst = load_instance(&a).unwrap();
    assert_eq!(inst.n_customers(), 12);
    let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    assert_eq!(ta.replace("\"a\"", "\"b\""), tb);
}

#[test]
fn solve_static_exact_matches_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "tiny", 6, 3);
    let inst = load_instance(&path).unwrap();
    let prizes: Vec<f64> = (0..6).map(|k| 300.0 + 250.0 * k as f64).collect();
    let cfg = write_json(&dir.path().join("solve.json"), &json!({
        "instance": "tiny.json", "mode": "prize", "prizes": prizes, "hgs": {"budget": {"iterations": 200}}
    }));
    let out = ok(&["solve-static", "--config", s(&cfg)]);
    let rec: PcSolutionRecord = serde_json::from_slice(&out.stdout).unwrap();
    let oracle = brute_force_solve(&static_pc_instance(&inst, prizes)).unwrap();
    assert!((rec.objective - oracle.objective).abs() < 1e-9, "{} vs {}", rec.objective, oracle.objective);
}

#[test]
fn solve_static_all_mandatory_serves_everyone() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(dir.path(), "m", 15, 8);
    let cfg = write_json(&dir.path().join("solve.json"), &json!({"hgs": {"budget": {"iterations": 100}}}));
    let out_file = dir.path().join("sol.json");
    let out = ok(&["solve-static", "--config", s(&cfg), "--instance", s(&path), "--out", s(&out_file)]);
    let rec: PcSolutionRecord = serde_json::from_slice(&out.stdout).unwrap();
    let mut served = rec.served.clone();
    served.sort_unstable();
    assert_eq!(served, (1..=15).collect::<Vec<_>>());
    let written: PcSolutionRecord = serde_json::from_str(&std::fs::read_to_string(out_file).unwrap()).unwrap();
    assert_eq!(written, rec);
}

#[test]
fn dataset_train_benchmark_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "p0", 20, 1);
    let dynamic = json!({"n_epochs": 3, "sample_size": 8});
    let build = write_json(&d.join("build.json"), &json!({
        "instances": ["p0.json"], "dynamic": dynamic, "n_scenarios": 2, "hgs": {"budget": {"iterations": 100}}
    }));
    let data = d.join("data.jsonl");
    ok(&["build-dataset", "--config", s(&build), "--out", s(&data)]);
    let lines = std::fs::read_to_string(&data).unwrap().lines().count();
    assert_eq!(lines, 2 * 3);

    let train = write_json(&d.join("train.json"), &json!({
        "dataset": "data.jsonl", "instances": ["p0.json"],
        "perturbation": {"n_samples": 3, "inner": {"budget": {"iterations": 30}}},
        "train": {"epochs": 2, "batch_size": 2}
    }));
    let model_dir = d.join("model");
    ok(&["train", "--config", s(&train), "--out", s(&model_dir)]);
    let curve = std::fs::read_to_string(model_dir.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 2);
    assert!(curve.starts_with("epoch,train_loss"));
    let log: Value = serde_json::from_str(&std::fs::read_to_string(model_dir.join("training_log.json")).unwrap()).unwrap();
    assert!(log["initial_train_loss"].as_f64().unwrap() >= 0.0);

    let bench = write_json(&d.join("bench.json"), &json!({
        "instances": ["p0.json"], "dynamic": dynamic, "sample_size": 8,
        "n_instance_seeds": 2, "first_seed": 40, "baseline": {"budget": {"iterations": 100}},
        "policies": [
            {"kind": "greedy"}, {"kind": "lazy"},
            {"kind": "ml_co", "model": "model/model.json"},
            {"kind": "rolling_horizon", "n_scenarios": 2}
        ]
    }));
    let run = |out: &Path, workers: &str| {
        ok(&["benchmark", "--config", s(&bench), "--budget-iters", "40", "--workers", workers, "--out", s(out)]);
    };
    let (b1, b2) = (d.join("b1"), d.join("b2"));
    run(&b1, "1");
    run(&b2, "2");
    let results = std::fs::read_to_string(b1.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 4);
    assert!(!results.contains("error"), "{results}");
    for f in ["results.csv", "summary.json", "runs/p0__41__ml_co.json"] {
        assert_eq!(std::fs::read(b1.join(f)).unwrap(), std::fs::read(b2.join(f)).unwrap(), "{f} differs");
    }
    let timings = std::fs::read_to_string(b1.join("timings.csv")).unwrap();
    assert!(timings.starts_with("instance,seed,policy,wall_time_s"));
}

#[test]
fn failures_report_json_and_nonzero_exit() {
    let out = dvrptw(&["benchmark", "--config", "/nonexistent/bench.json"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let report: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(report["command"], "benchmark");
    assert!(report["error"].as_str().unwrap().contains("bench.json"));
}

#[test]
fn ml_co_without_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "q", 5, 2);
    let bench = write_json(&dir.path().join("b.json"), &json!({"instances": ["q.json"], "policies": [{"kind": "ml_co"}]}));
    let out = dvrptw(&["benchmark", "--config", s(&bench), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

/// Header-keyed rows of a CSV file.
fn csv_rows(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines.map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect()).collect()
}

fn mean_gaps(dir: &Path) -> (Vec<std::collections::BTreeMap<String, String>>, Value) {
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    (csv_rows(&dir.join("results.csv")), summary)
}

fn policy_summary<'a>(summary: &'a Value, policy: &str) -> &'a Value {
    summary["policies"].as_array().unwrap().iter().find(|p| p["policy"] == policy).unwrap()
}

#[test]
fn single_seed_benchmark_rows_and_summary_audit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "one", 15, 4);
    let bench = write_json(&d.join("bench.json"), &json!({
        "instances": ["one.json"], "dynamic": {"n_epochs": 3, "sample_size": 6},
        "n_instance_seeds": 1, "baseline": {"budget": {"iterations": 100}},
        "policies": [{"kind": "greedy"}, {"kind": "lazy"}]
    }));
    let out = d.join("b");
    ok(&["benchmark", "--config", s(&bench), "--budget-iters", "30", "--out", s(&out)]);
    let (rows, summary) = mean_gaps(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(summary["baselines"].as_array().unwrap().len(), 1);
    for policy in ["greedy", "lazy"] {
        let gaps: Vec<f64> = rows.iter().filter(|r| r["policy"] == policy).map(|r| r["relative_gap"].parse().unwrap()).collect();
        let recomputed = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let reported = policy_summary(&summary, policy)["mean_gap"].as_f64().unwrap();
        assert!((recomputed - reported).abs() <= 1e-12, "{policy}: {recomputed} vs {reported}");
    }
}

#[test]
fn greedy_gap_exceeds_monte_carlo_gap_on_desk_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "desk", 30, 11);
    let bench = write_json(&d.join("bench.json"), &json!({
        "instances": ["desk.json"], "dynamic": {"n_epochs": 4, "sample_size": 12},
        "n_instance_seeds": 10, "baseline": {"budget": {"iterations": 300}},
        "policies": [{"kind": "greedy"}, {"kind": "monte_carlo"}]
    }));
    let out = d.join("b");
    ok(&["benchmark", "--config", s(&bench), "--budget-iters", "100", "--out", s(&out)]);
    let (_, summary) = mean_gaps(&out);
    let gap = |p| policy_summary(&summary, p)["mean_gap"].as_f64().unwrap();
    assert!(gap("greedy") > gap("monte_carlo"), "greedy {} vs monte carlo {}", gap("greedy"), gap("monte_carlo"));
}

fn train_in(d: &Path, epochs: usize, out: &str) -> PathBuf {
    if !d.join("data.jsonl").exists() {
        gen(d, "t0", 15, 6);
        let build = write_json(&d.join("build.json"), &json!({
            "instances": ["t0.json"], "dynamic": {"n_epochs": 3, "sample_size": 6},
            "n_scenarios": 2, "hgs": {"budget": {"iterations": 60}}
        }));
        ok(&["build-dataset", "--config", s(&build), "--out", s(&d.join("data.jsonl"))]);
    }
    let train = write_json(&d.join(format!("{out}.json")), &json!({
        "dataset": "data.jsonl", "instances": ["t0.json"], "model_kind": "mlp",
        "perturbation": {"n_samples": 2, "inner": {"budget": {"iterations": 20}}},
        "train": {"epochs": epochs, "seed": 5}
    }));
    let dir = d.join(out);
    ok(&["train", "--config", s(&train), "--out", s(&dir)]);
    dir
}

#[test]
fn zero_epoch_training_returns_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let m = train_in(dir.path(), 0, "m0");
    let model = dvrptw_cli::load_model(&m.join("model.json")).unwrap();
    let init = PrizeModel::init(ModelKind::Mlp, model.feature_config.clone(), derive_seed(5, &[2]));
    assert_eq!(model.parameters(), init.parameters());
    assert_eq!(model.metadata.train_seed, 5);
    assert_eq!(std::fs::read_to_string(m.join("loss_curve.csv")).unwrap().lines().count(), 1);
}

#[test]
fn retraining_reproduces_model_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_in(dir.path(), 2, "a");
    let b = train_in(dir.path(), 2, "b");
    for f in ["model.json", "loss_curve.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}
