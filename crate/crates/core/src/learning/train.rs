//! Mini-batch stochastic gradient training of a prize model on the
//! perturbed imitation loss.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{raw_features, FeatureConfig, FeatureSet};
use super::loss::{perturbed_loss_and_grad, CoProblem, LossError, PerturbationConfig};
use super::model::{ModelError, ModelKind, PrizeModel};
use crate::dataset::TrainingSample;
use crate::instance::StaticInstance;
use crate::pchgs::PcSolution;
use crate::rng::{derive_seed, derived_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Step size at epoch `k` is `learning_rate / (1 + lr_decay · k)`.
    pub lr_decay: f64,
    pub optimizer: Optimizer,
    /// Seed each inner solve with the previous pass's solutions.
    pub warm_start: bool,
    pub validation_fraction: f64,
    /// Also evaluate the training split with the fixed evaluation seed
    /// after every epoch.
    pub track_train_loss: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 0.01,
            lr_decay: 0.0,
            optimizer: Optimizer::Adam,
            warm_start: true,
            validation_fraction: 0.2,
            track_train_loss: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || !(self.lr_decay >= 0.0) {
            return Err(TrainError::Config("learning rate and decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::Config("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * epoch as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss estimate over the training samples seen this epoch,
    /// evaluated before each update.
    pub train_loss: f64,
    /// Training-split loss after the epoch under the evaluation seed.
    pub eval_train_loss: Option<f64>,
    pub validation_loss: Option<f64>,
    pub learning_rate: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Loss on the training split with a fixed evaluation seed, before and
    /// after training.
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were kept; `None` means the initial weights.
    pub best_epoch: Option<usize>,
    pub n_train: usize,
    pub n_validation: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset has no sample with open requests")]
    EmptyDataset,
    #[error("sample {sample} refers to unknown instance {name:?}")]
    UnknownInstance { sample: usize, name: String },
    #[error("sample {sample}: {source}")]
    Loss { sample: usize, source: LossError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("loss diverged at epoch {epoch}")]
    Diverged { epoch: usize, log: Box<TrainingLog> },
}

struct Prepared {
    problem: CoProblem,
    /// Standardized feature rows.
    features: Vec<Vec<f64>>,
}

enum Step {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Step {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => Step::Sgd,
            Optimizer::Adam => Step::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Step::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Step::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - Self::B1.powi(*t);
                let c2 = 1.0 - Self::B2.powi(*t);
                for k in 0..params.len() {
                    m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * grad[k];
                    v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
                    params[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

const EVAL_STREAM: u64 = 0xE7A1;

/// Mean loss estimate over `idx` with per-sample seeds fixed by `seed`.
fn mean_loss(model: &PrizeModel, data: &[Prepared], idx: &[usize], pcfg: &PerturbationConfig, seed: u64) -> Result<f64, TrainError> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in idx {
        let theta = model.predict(&data[i].features)?;
        let p = pcfg.with_seed(derive_seed(seed, &[i as u64]));
        let out = perturbed_loss_and_grad(&theta, &data[i].problem, &p, &[]).map_err(|source| TrainError::Loss { sample: i, source })?;
        total += out.loss;
    }
    Ok(total / idx.len() as f64)
}

fn prepare(
    dataset: &[TrainingSample],
    instances: &[StaticInstance],
    exact: bool,
) -> Result<(Vec<Prepared>, Vec<Vec<Vec<f64>>>), TrainError> {
    let by_name: BTreeMap<&str, &StaticInstance> = instances.iter().map(|i| (i.name.as_str(), i)).collect();
    let mut data = Vec::new();
    let mut raw = Vec::new();
    for (k, s) in dataset.iter().enumerate() {
        if s.open_requests.is_empty() {
            continue;
        }
        let inst = by_name.get(s.instance.as_str()).ok_or_else(|| TrainError::UnknownInstance {
            sample: k,
            name: s.instance.clone(),
        })?;
        let mut problem = CoProblem::from_sample(s, inst).map_err(|source| TrainError::Loss { sample: k, source })?;
        if exact {
            problem = problem.with_exact().map_err(|source| TrainError::Loss { sample: k, source })?;
        }
        raw.push(raw_features(&s.state(), inst, &s.config, FeatureSet::Complete));
        data.push(Prepared {
            problem,
            features: Vec::new(),
        });
    }
    Ok((data, raw))
}

fn select(rows: &[Vec<f64>], set: FeatureSet) -> Vec<Vec<f64>> {
    use super::features::MODEL_FREE_DIM;
    rows.iter()
        .map(|r| match set {
            FeatureSet::ModelFree => r[..MODEL_FREE_DIM].to_vec(),
            FeatureSet::ModelAware => r[MODEL_FREE_DIM..].to_vec(),
            FeatureSet::Complete => r.clone(),
        })
        .collect()
}

/// Trains a fresh model of `kind` on `dataset` and returns the weights with
/// the lowest validation loss (training loss when there is no validation
/// split), together with the training log.
pub fn train(
    dataset: &[TrainingSample],
    instances: &[StaticInstance],
    set: FeatureSet,
    kind: ModelKind,
    pcfg: &PerturbationConfig,
    tcfg: &TrainConfig,
) -> Result<(PrizeModel, TrainingLog), TrainError> {
    tcfg.validate()?;
    pcfg.validate().map_err(|source| TrainError::Loss { sample: 0, source })?;
    let (mut data, raw) = prepare(dataset, instances, pcfg.exact_inner)?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut derived_rng(tcfg.seed, &[1]));
    let n_val = ((tcfg.validation_fraction * data.len() as f64).round() as usize).min(data.len() - 1);
    let val_idx: Vec<usize> = order[..n_val].to_vec();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();
    train_idx.sort_unstable();

    let fit_rows: Vec<Vec<f64>> = train_idx.iter().flat_map(|&i| select(&raw[i], set)).collect();
    let fcfg = FeatureConfig::fit(set, &fit_rows);
    for (d, r) in data.iter_mut().zip(&raw) {
        d.features = select(r, set);
        for row in d.features.iter_mut() {
            fcfg.standardize(row);
        }
    }

    let mut model = PrizeModel::init(kind, fcfg, derive_seed(tcfg.seed, &[2]));
    model.metadata.train_seed = tcfg.seed;
    model.metadata.epsilon = pcfg.epsilon;
    model.metadata.n_samples = pcfg.n_samples;

    let eval_seed = derive_seed(pcfg.seed, &[EVAL_STREAM]);
    let initial_train_loss = mean_loss(&model, &data, &train_idx, pcfg, eval_seed)?;
    let mut best_loss = if val_idx.is_empty() {
        initial_train_loss
    } else {
        mean_loss(&model, &data, &val_idx, pcfg, eval_seed)?
    };
    let mut best = model.clone();
    let mut best_epoch = None;

    let mut log = TrainingLog {
        initial_train_loss,
        final_train_loss: initial_train_loss,
        epochs: Vec::with_capacity(tcfg.epochs),
        best_epoch: None,
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
    };
    let mut warm: Vec<Vec<PcSolution>> = vec![Vec::new(); data.len()];
    let mut params = model.parameters();
    let mut step = Step::new(tcfg.optimizer, params.len());

    for epoch in 0..tcfg.epochs {
        let mut shuffled = train_idx.clone();
        shuffled.shuffle(&mut derived_rng(tcfg.seed, &[3, epoch as u64]));
        let lr = tcfg.step_size(epoch);
        let mut loss_sum = 0.0;
        let mut grad_sq = 0.0;
        for batch in shuffled.chunks(tcfg.batch_size) {
            let mut grad_w = vec![0.0; params.len()];
            for &i in batch {
                let theta = model.predict(&data[i].features)?;
                let p = pcfg.with_seed(derive_seed(pcfg.seed, &[epoch as u64, i as u64]));
                let starts: &[PcSolution] = if tcfg.warm_start { &warm[i] } else { &[] };
                let out = perturbed_loss_and_grad(&theta, &data[i].problem, &p, starts).map_err(|source| TrainError::Loss { sample: i, source })?;
                if !out.loss.is_finite() {
                    log.epochs.push(EpochLog {
                        epoch,
                        train_loss: f64::NAN,
                        eval_train_loss: None,
                        validation_loss: None,
                        learning_rate: lr,
                        grad_norm: f64::NAN,
                    });
                    return Err(TrainError::Diverged { epoch, log: Box::new(log) });
                }
                loss_sum += out.loss;
                let g = model.backprop(&data[i].features, &out.grad)?;
                for (a, b) in grad_w.iter_mut().zip(&g) {
                    *a += b / batch.len() as f64;
                }
                if tcfg.warm_start && !pcfg.exact_inner {
                    warm[i] = out.solutions;
                }
            }
            grad_sq += grad_w.iter().map(|g| g * g).sum::<f64>();
            step.apply(&mut params, &grad_w, lr);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Diverged { epoch, log: Box::new(log) });
            }
            model.set_parameters(&params);
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let validation_loss = if val_idx.is_empty() {
            None
        } else {
            Some(mean_loss(&model, &data, &val_idx, pcfg, eval_seed)?)
        };
        let eval_train_loss = if tcfg.track_train_loss || val_idx.is_empty() {
            Some(mean_loss(&model, &data, &train_idx, pcfg, eval_seed)?)
        } else {
            None
        };
        let checkpoint_loss = validation_loss.or(eval_train_loss).unwrap_or(f64::INFINITY);
        if !checkpoint_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, log: Box::new(log) });
        }
        if checkpoint_loss < best_loss {
            best_loss = checkpoint_loss;
            best = model.clone();
            best_epoch = Some(epoch);
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            eval_train_loss,
            validation_loss,
            learning_rate: lr,
            grad_norm: grad_sq.sqrt(),
        });
    }

    best.metadata.epochs_run = tcfg.epochs;
    best.metadata.n_samples = pcfg.n_samples;
    log.best_epoch = best_epoch;
    log.final_train_loss = mean_loss(&best, &data, &train_idx, pcfg, eval_seed)?;
    Ok((best, log))
}
