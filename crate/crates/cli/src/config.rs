//! JSON command configurations. Relative paths inside a config file are
//! resolved against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dvrptw::learning::{FeatureSet, ModelKind, PerturbationConfig, TrainConfig};
use dvrptw::pchgs::{Budget, HgsParams};
use dvrptw::policies::PolicySpec;
use dvrptw::simulator::DynamicConfig;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a config, or its defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, PathBuf)> {
    match path {
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((read_json(p)?, base))
        }
        None => Ok((T::default(), PathBuf::new())),
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    AllMandatory,
    Prize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveStaticConfig {
    pub instance: PathBuf,
    pub mode: SolveMode,
    /// One prize per customer row, for prize mode.
    pub prizes: Vec<f64>,
    /// Use the exhaustive solver instead of the genetic search.
    pub exact: bool,
    pub hgs: HgsParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildDatasetConfig {
    pub instances: Vec<PathBuf>,
    pub dynamic: DynamicConfig,
    pub n_scenarios: usize,
    pub hgs: HgsParams,
    pub seed: u64,
}

impl Default for BuildDatasetConfig {
    fn default() -> Self {
        BuildDatasetConfig {
            instances: Vec::new(),
            dynamic: DynamicConfig::default(),
            n_scenarios: 3,
            hgs: HgsParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainCommandConfig {
    pub dataset: PathBuf,
    pub instances: Vec<PathBuf>,
    pub feature_set: FeatureSet,
    pub model_kind: ModelKind,
    pub perturbation: PerturbationConfig,
    pub train: TrainConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        TrainCommandConfig {
            dataset: PathBuf::new(),
            instances: Vec::new(),
            feature_set: FeatureSet::Complete,
            model_kind: ModelKind::Mlp,
            perturbation: PerturbationConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub instances: Vec<PathBuf>,
    pub dynamic: DynamicConfig,
    pub policies: Vec<PolicySpec>,
    pub n_instance_seeds: usize,
    /// Scenario seeds are `first_seed, first_seed + 1, …`.
    pub first_seed: u64,
    pub sample_size: usize,
    /// Search parameters of the anticipative baseline.
    pub baseline: HgsParams,
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            instances: Vec::new(),
            dynamic: DynamicConfig::default(),
            policies: Vec::new(),
            n_instance_seeds: 20,
            first_seed: 0,
            sample_size: 20,
            baseline: HgsParams::default(),
            out_dir: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        anyhow::ensure!(!self.instances.is_empty(), "benchmark needs at least one instance");
        anyhow::ensure!(!self.policies.is_empty(), "benchmark needs at least one policy");
        anyhow::ensure!(self.n_instance_seeds >= 1, "benchmark needs at least one seed");
        anyhow::ensure!(self.sample_size >= 1, "sample_size must be positive");
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_instance_seeds as u64).map(|k| self.first_seed + k).collect()
    }
}

/// Command-line overrides shared by every command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget_iters: Option<u64>,
    pub budget_s: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn budget(&self) -> Option<Budget> {
        match (self.budget_iters, self.budget_s) {
            (Some(n), _) => Some(Budget::Iterations(n)),
            (None, Some(s)) => Some(Budget::Seconds(s)),
            (None, None) => None,
        }
    }

    pub fn apply_hgs(&self, hgs: &mut HgsParams) {
        if let Some(b) = self.budget() {
            hgs.budget = b;
        }
        if let Some(s) = self.seed {
            hgs.seed = s;
        }
    }

    pub fn apply_policy(&self, p: &mut PolicySpec) {
        if let Some(n) = self.budget_iters {
            p.budget_iters = Some(n);
            p.budget_s = None;
        } else if let Some(s) = self.budget_s {
            p.budget_s = Some(s);
            p.budget_iters = None;
        }
    }
}
