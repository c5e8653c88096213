//! Runs every (instance, seed, policy) episode plus the anticipative
//! baseline per (instance, seed), and renders the reports.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dvrptw::dataset::anticipative_baseline_cost;
use dvrptw::instance::{Cost, StaticInstance};
use dvrptw::pchgs::HgsParams;
use dvrptw::policies::Policy;
use dvrptw::rng::derive_seed;
use dvrptw::simulator::{run_episode, DynamicConfig, RunRecord, SystemState};

pub const RESULTS_CSV: &str = "results.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const RUNS_DIR: &str = "runs";

/// Everything a benchmark needs, with files already loaded.
#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub instances: Vec<StaticInstance>,
    pub dynamic: DynamicConfig,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub baseline: HgsParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance: String,
    pub seed: u64,
    pub policy: String,
    pub total_cost: Option<Cost>,
    pub epochs: usize,
    pub baseline_cost: Option<Cost>,
    pub relative_gap: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub instance: String,
    pub seed: u64,
    pub policy: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub episodes: usize,
    pub failures: usize,
    pub mean_cost: Option<f64>,
    pub mean_gap: Option<f64>,
    /// Sample variance of the relative gap.
    pub var_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub instance: String,
    pub seed: u64,
    pub baseline_cost: Option<Cost>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policies: Vec<PolicySummary>,
    pub baselines: Vec<BaselineEntry>,
    pub mean_baseline_cost: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub rows: Vec<ReportRow>,
    pub timings: Vec<TimingRow>,
    pub summary: Summary,
    /// (file name, record) per successful episode.
    pub runs: Vec<(String, RunRecord)>,
}

/// `(cost − baseline) / baseline`.
pub fn relative_gap(cost: Cost, baseline: Cost) -> f64 {
    (cost - baseline) as f64 / baseline as f64
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_variance(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() >= 2).then(|| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

pub fn summarize(rows: &[ReportRow], policies: &[String], baselines: Vec<BaselineEntry>) -> Summary {
    let per_policy = policies
        .iter()
        .map(|p| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| &r.policy == p).collect();
            let costs: Vec<f64> = mine.iter().filter_map(|r| r.total_cost).map(|c| c as f64).collect();
            let gaps: Vec<f64> = mine.iter().filter_map(|r| r.relative_gap).collect();
            PolicySummary {
                policy: p.clone(),
                episodes: mine.len(),
                failures: mine.iter().filter(|r| r.total_cost.is_none()).count(),
                mean_cost: mean(&costs),
                mean_gap: mean(&gaps),
                var_gap: sample_variance(&gaps),
            }
        })
        .collect();
    let costs: Vec<f64> = baselines.iter().filter_map(|b| b.baseline_cost).map(|c| c as f64).collect();
    Summary {
        policies: per_policy,
        mean_baseline_cost: mean(&costs),
        baselines,
    }
}

struct Episode {
    row: ReportRow,
    timing: TimingRow,
    run: Option<(String, RunRecord)>,
}

pub fn run_file_name(instance: &str, seed: u64, policy: &str) -> String {
    format!("{instance}__{seed}__{policy}.json")
}

/// Runs the plan on the current rayon pool. Output order is fixed by
/// (instance, seed, policy) position regardless of scheduling.
pub fn run_benchmark(plan: &BenchmarkPlan) -> BenchmarkOutput {
    let pairs: Vec<(usize, u64)> = (0..plan.instances.len())
        .flat_map(|i| plan.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let baselines: Vec<BaselineEntry> = pairs
        .par_iter()
        .map(|&(i, seed)| {
            let inst = &plan.instances[i];
            let cfg = plan.dynamic.with_seed(seed);
            let params = plan.baseline.with_budget(plan.baseline.budget, derive_seed(plan.baseline.seed, &[seed]));
            let (baseline_cost, status) = match anticipative_baseline_cost(inst, &cfg, &params) {
                Ok(c) if c > 0 => (Some(c), "ok".to_string()),
                Ok(c) => (None, format!("error: non-positive baseline cost {c}")),
                Err(e) => (None, format!("error: {e}")),
            };
            BaselineEntry {
                instance: inst.name.clone(),
                seed,
                baseline_cost,
                status,
            }
        })
        .collect();
    let baseline_of: BTreeMap<(usize, u64), Option<Cost>> = pairs
        .iter()
        .zip(&baselines)
        .map(|(&k, b)| (k, b.baseline_cost))
        .collect();

    let jobs: Vec<(usize, u64, usize)> = pairs
        .iter()
        .flat_map(|&(i, s)| (0..plan.policies.len()).map(move |p| (i, s, p)))
        .collect();
    let episodes: Vec<Episode> = jobs
        .par_iter()
        .map(|&(i, seed, p)| {
            let inst = &plan.instances[i];
            let policy = &plan.policies[p];
            let cfg = plan.dynamic.with_seed(seed);
            let name = policy.spec.kind.name().to_string();
            let baseline_cost = baseline_of[&(i, seed)];
            let result = run_episode(inst, &cfg, |s: &SystemState| policy.decide(s, inst, &cfg));
            let (row, wall, run) = match result {
                Ok(r) => {
                    let row = ReportRow {
                        instance: inst.name.clone(),
                        seed,
                        policy: name.clone(),
                        total_cost: Some(r.total_cost),
                        epochs: r.per_epoch.len(),
                        baseline_cost,
                        relative_gap: baseline_cost.map(|b| relative_gap(r.total_cost, b)),
                        status: "ok".into(),
                    };
                    let wall = r.wall_time_s();
                    (row, wall, Some((run_file_name(&inst.name, seed, &name), RunRecord::new(&cfg, &r))))
                }
                Err(e) => (
                    ReportRow {
                        instance: inst.name.clone(),
                        seed,
                        policy: name.clone(),
                        total_cost: None,
                        epochs: 0,
                        baseline_cost,
                        relative_gap: None,
                        status: format!("error: {e}"),
                    },
                    0.0,
                    None,
                ),
            };
            Episode {
                timing: TimingRow {
                    instance: inst.name.clone(),
                    seed,
                    policy: name,
                    wall_time_s: wall,
                },
                row,
                run,
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(episodes.len());
    let mut timings = Vec::with_capacity(episodes.len());
    let mut runs = Vec::new();
    for e in episodes {
        rows.push(e.row);
        timings.push(e.timing);
        runs.extend(e.run);
    }
    let names: Vec<String> = plan.policies.iter().map(|p| p.spec.kind.name().to_string()).collect();
    let summary = summarize(&rows, &names, baselines);
    BenchmarkOutput {
        rows,
        timings,
        summary,
        runs,
    }
}

/// CSV text of the result rows; wall times live in a separate file so
/// this one is reproducible byte for byte.
pub fn results_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "seed", "policy", "total_cost", "epochs", "baseline_cost", "relative_gap", "status"])?;
    for r in rows {
        w.write_record([
            r.instance.clone(),
            r.seed.to_string(),
            r.policy.clone(),
            r.total_cost.map(|c| c.to_string()).unwrap_or_default(),
            r.epochs.to_string(),
            r.baseline_cost.map(|c| c.to_string()).unwrap_or_default(),
            r.relative_gap.map(|g| g.to_string()).unwrap_or_default(),
            r.status.clone(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn timings_csv(rows: &[TimingRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn write_benchmark(out: &BenchmarkOutput, dir: &Path) -> Result<()> {
    let runs_dir = dir.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;
    std::fs::write(dir.join(RESULTS_CSV), results_csv(&out.rows)?)?;
    std::fs::write(dir.join(TIMINGS_CSV), timings_csv(&out.timings)?)?;
    std::fs::write(dir.join(SUMMARY_JSON), serde_json::to_string_pretty(&out.summary)?)?;
    for (name, record) in &out.runs {
        std::fs::write(runs_dir.join(name), serde_json::to_string_pretty(record)?)?;
    }
    Ok(())
}
