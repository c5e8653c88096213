//! Command implementations behind the `dvrptw` binary.

pub mod benchmark;
pub mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dvrptw::dataset::{build_dataset, read_dataset, write_dataset};
use dvrptw::generator::{generate_instance, GeneratorConfig};
use dvrptw::instance::{load_instance, StaticInstance};
use dvrptw::learning::{train, PrizeModel, TrainingLog};
use dvrptw::pchgs::{self, brute_force_solve, PcInstance, PcRequest, PcSolutionRecord};
use dvrptw::policies::{Policy, PolicyKind};

use benchmark::{run_benchmark, write_benchmark, BenchmarkOutput, BenchmarkPlan};
use config::{load, resolve, BenchmarkConfig, BuildDatasetConfig, Overrides, SolveMode, SolveStaticConfig, TrainCommandConfig};

pub const MODEL_JSON: &str = "model.json";
pub const LOSS_CURVE_CSV: &str = "loss_curve.csv";
pub const TRAINING_LOG_JSON: &str = "training_log.json";

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_instances(base: &Path, paths: &[PathBuf]) -> Result<Vec<StaticInstance>> {
    paths
        .iter()
        .map(|p| {
            let full = resolve(base, p);
            load_instance(&full).with_context(|| format!("loading instance {}", full.display()))
        })
        .collect()
}

pub fn cmd_gen_instance(config: Option<&Path>, ov: &Overrides) -> Result<PathBuf> {
    let (mut cfg, _) = load::<GeneratorConfig>(config)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let inst = generate_instance(&cfg)?;
    let out = ov.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.json", inst.name)));
    write_text(&out, &inst.to_json_string())?;
    Ok(out)
}

/// Every customer of a static instance as one request leaving at time 0.
pub fn static_pc_instance(inst: &StaticInstance, prizes: Vec<f64>) -> PcInstance {
    let requests = (1..inst.n_rows()).map(|row| PcRequest::from_stop(row, &inst.stop(row), 0)).collect();
    PcInstance::new(inst, requests, prizes, 0)
}

pub fn solve_static(inst: &StaticInstance, cfg: &SolveStaticConfig) -> Result<PcSolutionRecord> {
    let n = inst.n_customers();
    let pc = match cfg.mode {
        SolveMode::AllMandatory => static_pc_instance(inst, vec![0.0; n]).all_mandatory(),
        SolveMode::Prize => {
            if cfg.prizes.len() != n {
                bail!("prize mode needs {n} prizes, got {}", cfg.prizes.len());
            }
            static_pc_instance(inst, cfg.prizes.clone())
        }
    };
    let sol = if cfg.exact {
        brute_force_solve(&pc)?
    } else {
        pchgs::solve(&pc, &cfg.hgs, &[])?
    };
    Ok(sol.to_record(&pc))
}

pub fn cmd_solve_static(config: Option<&Path>, instance: Option<&Path>, ov: &Overrides) -> Result<String> {
    let (mut cfg, base) = load::<SolveStaticConfig>(config)?;
    ov.apply_hgs(&mut cfg.hgs);
    let path = match instance {
        Some(p) => p.to_path_buf(),
        None => resolve(&base, &cfg.instance),
    };
    let inst = load_instance(&path).with_context(|| format!("loading instance {}", path.display()))?;
    let record = solve_static(&inst, &cfg)?;
    let text = serde_json::to_string_pretty(&record)?;
    if let Some(out) = &ov.out {
        write_text(out, &text)?;
    }
    Ok(text)
}

pub fn cmd_build_dataset(config: Option<&Path>, ov: &Overrides) -> Result<(PathBuf, usize)> {
    let (mut cfg, base) = load::<BuildDatasetConfig>(config)?;
    ov.apply_hgs(&mut cfg.hgs);
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let instances = load_instances(&base, &cfg.instances)?;
    if instances.is_empty() {
        bail!("build-dataset needs at least one instance");
    }
    let samples = build_dataset(&instances, &cfg.dynamic, cfg.n_scenarios, &cfg.hgs, cfg.seed)?;
    let out = ov.out.clone().unwrap_or_else(|| PathBuf::from("dataset.jsonl"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_dataset(&out, &samples)?;
    Ok((out, samples.len()))
}

/// One row per training epoch.
pub fn loss_curve_csv(log: &TrainingLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "eval_train_loss", "validation_loss", "learning_rate", "grad_norm"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &log.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            opt(e.eval_train_loss),
            opt(e.validation_loss),
            e.learning_rate.to_string(),
            e.grad_norm.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn cmd_train(config: Option<&Path>, dataset: Option<&Path>, ov: &Overrides) -> Result<(PathBuf, TrainingLog)> {
    let (mut cfg, base) = load::<TrainCommandConfig>(config)?;
    ov.apply_hgs(&mut cfg.perturbation.inner);
    if let Some(s) = ov.seed {
        cfg.train.seed = s;
        cfg.perturbation.seed = s;
    }
    let data_path = match dataset {
        Some(p) => p.to_path_buf(),
        None => resolve(&base, &cfg.dataset),
    };
    let samples = read_dataset(&data_path).with_context(|| format!("reading dataset {}", data_path.display()))?;
    let instances = load_instances(&base, &cfg.instances)?;
    let (model, log) = train(&samples, &instances, cfg.feature_set, cfg.model_kind, &cfg.perturbation, &cfg.train)?;
    let dir = ov.out.clone().unwrap_or_else(|| PathBuf::from("model"));
    write_text(&dir.join(MODEL_JSON), &model.to_json())?;
    write_text(&dir.join(LOSS_CURVE_CSV), &loss_curve_csv(&log)?)?;
    write_text(&dir.join(TRAINING_LOG_JSON), &serde_json::to_string_pretty(&log)?)?;
    Ok((dir, log))
}

pub fn load_model(path: &Path) -> Result<PrizeModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(PrizeModel::from_json(&text)?)
}

pub fn benchmark_plan(cfg: &BenchmarkConfig, base: &Path, ov: &Overrides) -> Result<BenchmarkPlan> {
    cfg.validate()?;
    let instances = load_instances(base, &cfg.instances)?;
    let mut dynamic = cfg.dynamic.clone();
    dynamic.sample_size = cfg.sample_size;
    for inst in &instances {
        dynamic.validate(inst).with_context(|| format!("instance {}", inst.name))?;
    }
    let mut baseline = cfg.baseline.clone();
    if let Some(b) = ov.budget() {
        baseline.budget = b;
    }
    let mut policies = Vec::with_capacity(cfg.policies.len());
    for spec in &cfg.policies {
        let mut spec = spec.clone();
        ov.apply_policy(&mut spec);
        let model = match (&spec.model, spec.kind) {
            (Some(p), _) => Some(load_model(&resolve(base, Path::new(p)))?),
            (None, PolicyKind::MlCo) => bail!("ml_co policy needs a model file"),
            (None, _) => None,
        };
        policies.push(Policy::new(spec, model)?);
    }
    let mut seeds_cfg = cfg.clone();
    if let Some(s) = ov.seed {
        seeds_cfg.first_seed = s;
    }
    Ok(BenchmarkPlan {
        instances,
        dynamic,
        policies,
        seeds: seeds_cfg.seeds(),
        baseline,
    })
}

pub fn cmd_benchmark(config: Option<&Path>, ov: &Overrides, workers: Option<usize>) -> Result<(PathBuf, BenchmarkOutput)> {
    let (cfg, base) = load::<BenchmarkConfig>(config)?;
    let plan = benchmark_plan(&cfg, &base, ov)?;
    let dir = ov
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(|d| resolve(&base, d)))
        .unwrap_or_else(|| PathBuf::from("benchmark"));
    let out = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()?
            .install(|| run_benchmark(&plan)),
        None => run_benchmark(&plan),
    };
    write_benchmark(&out, &dir)?;
    Ok((dir, out))
}

/// Machine-readable failure report.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub command: String,
    pub error: String,
    pub causes: Vec<String>,
}

impl ErrorReport {
    pub fn new(command: &str, err: &anyhow::Error) -> Self {
        ErrorReport {
            command: command.to_string(),
            error: err.to_string(),
            causes: err.chain().skip(1).map(|c| c.to_string()).collect(),
        }
    }
}
