//! Non-optimality loss of a prize vector against a target decision, and its
//! Gaussian-perturbed version with a sampled gradient.
//!
//! Prizes handed to the loss are dimensionless: the routing problem is
//! posed with prizes `θ · scale` and its objective divided by `scale`, where
//! `scale` is [`prize_scale`] of the static instance. The target term
//! `h(ȳ)` is therefore `−cost(ȳ) / scale`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TrainingSample;
use crate::instance::{StaticInstance, DEPOT};
use crate::pchgs::{self, Budget, ExactSolver, HgsParams, PcError, PcInstance, PcSolution};
use crate::rng::{derive_seed, derived_rng};
use crate::simulator::{DynamicConfig, Decision, SystemState};

/// Mean depot-to-customer travel time; 1 for degenerate instances.
pub fn prize_scale(inst: &StaticInstance) -> f64 {
    let n = inst.n_customers();
    if n == 0 {
        return 1.0;
    }
    let mean = (1..inst.n_rows()).map(|j| inst.travel_time(DEPOT, j) as f64).sum::<f64>() / n as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub epsilon: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub inner: HgsParams,
    pub exact_inner: bool,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            epsilon: 1.0,
            n_samples: 10,
            seed: 0,
            inner: HgsParams {
                budget: Budget::Iterations(100),
                ..HgsParams::default()
            },
            exact_inner: false,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(LossError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n_samples == 0 {
            return Err(LossError::Config("at least one perturbation sample is required".into()));
        }
        self.inner.validate().map_err(LossError::Config)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PerturbationConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("invalid perturbation config: {0}")]
    Config(String),
    #[error("prize vector has length {got}, problem has {expected} requests")]
    Dimension { got: usize, expected: usize },
    #[error("target decision serves unknown request {id}")]
    UnknownRequest { id: usize },
    #[error("inner solve failed on perturbation sample {sample}: {source}")]
    Inner { sample: usize, source: PcError },
    #[error("inner solve failed: {0}")]
    Solver(#[from] PcError),
}

/// The inner maximization used by the loss.
#[derive(Debug, Clone, Copy)]
pub enum Inner<'a> {
    Exact,
    Heuristic { params: &'a HgsParams, warm_start: &'a [PcSolution] },
}

/// One epoch's routing problem paired with its target decision.
#[derive(Debug, Clone)]
pub struct CoProblem {
    /// Prizes are placeholders; they are replaced on every solve.
    pub pc: PcInstance,
    pub scale: f64,
    pub target: PcSolution,
    /// Served indicator `g(ȳ)`.
    pub target_g: Vec<f64>,
    /// `h(ȳ) = −cost(ȳ) / scale`.
    pub target_h: f64,
    exact: Option<ExactSolver>,
}

impl CoProblem {
    pub fn new(state: &SystemState, inst: &StaticInstance, cfg: &DynamicConfig, target: &Decision) -> Result<Self, LossError> {
        let n = state.open.len();
        let pc = PcInstance::for_state(inst, state, cfg.departure(state.epoch), vec![0.0; n]);
        let mut routes = Vec::with_capacity(target.routes.len());
        for r in &target.routes {
            let idx: Result<Vec<usize>, LossError> = r
                .visits
                .iter()
                .map(|&id| pc.index_of(id).ok_or(LossError::UnknownRequest { id }))
                .collect();
            routes.push(idx?);
        }
        let target = PcSolution::from_routes(&pc, routes, 0, pchgs::BudgetMode::Exhaustive);
        let scale = prize_scale(inst);
        Ok(CoProblem {
            target_g: target.served_indicator(n),
            target_h: -(target.cost as f64) / scale,
            target,
            scale,
            pc,
            exact: None,
        })
    }

    pub fn from_sample(sample: &TrainingSample, inst: &StaticInstance) -> Result<Self, LossError> {
        CoProblem::new(&sample.state(), inst, &sample.config, &sample.target_decision())
    }

    /// Precomputes the exhaustive inner solver.
    pub fn with_exact(mut self) -> Result<Self, LossError> {
        self.exact = Some(ExactSolver::new(&self.pc)?);
        Ok(self)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn len(&self) -> usize {
        self.pc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pc.is_empty()
    }

    fn check(&self, theta: &[f64]) -> Result<(), LossError> {
        if theta.len() != self.len() {
            return Err(LossError::Dimension {
                got: theta.len(),
                expected: self.len(),
            });
        }
        Ok(())
    }

    /// `θ⊤g(y) + h(y)` in scaled units.
    pub fn value(&self, theta: &[f64], sol: &PcSolution) -> f64 {
        sol.served.iter().map(|&i| theta[i]).sum::<f64>() - sol.cost as f64 / self.scale
    }

    pub fn target_value(&self, theta: &[f64]) -> f64 {
        dot(theta, &self.target_g) + self.target_h
    }

    /// Maximizer of `θ⊤g(y) + h(y)` over feasible decisions.
    pub fn maximize(&self, theta: &[f64], inner: Inner<'_>) -> Result<PcSolution, LossError> {
        self.check(theta)?;
        let prizes: Vec<f64> = theta.iter().map(|t| t * self.scale).collect();
        match inner {
            Inner::Exact => match &self.exact {
                Some(solver) => Ok(solver.solve(&prizes)?),
                None => Ok(ExactSolver::new(&self.pc)?.solve(&prizes)?),
            },
            Inner::Heuristic { params, warm_start } => {
                let mut pc = self.pc.clone();
                pc.prizes = prizes;
                Ok(pchgs::solve(&pc, params, warm_start)?)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max_y{θ⊤g(y)+h(y)} − (θ⊤g(ȳ)+h(ȳ))`. A heuristic inner maximum is
/// never allowed to fall below the target, which is itself feasible.
pub fn loss_natural(theta: &[f64], problem: &CoProblem, inner: Inner<'_>) -> Result<f64, LossError> {
    let best = problem.maximize(theta, inner)?;
    let found = problem.value(theta, &best);
    let target = problem.target_value(theta);
    Ok(match inner {
        Inner::Exact => found - target,
        Inner::Heuristic { .. } => (found - target).max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub std_error: f64,
    /// Inner maximizer per perturbation sample.
    pub solutions: Vec<PcSolution>,
}

/// Standard normal draws `Z_1..Z_S`, a function of the seed alone.
pub fn perturbation_draws(seed: u64, n_samples: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = derived_rng(seed, &[dim as u64]);
    (0..n_samples)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Monte Carlo estimate of the perturbed loss and its gradient.
///
/// Each sample contributes `(θ+εZ_s)⊤(g(y_s) − g(ȳ)) + h(y_s) − h(ȳ)`, the
/// gap between the perturbed maximum and the target under the same
/// perturbation; its mean differs from the plain estimator only by a
/// zero-mean term and has lower variance. The gradient is
/// `mean_s g(y_s) − g(ȳ)`.
///
/// With a heuristic inner, a sample whose solution scores below the target
/// uses the target instead, and `warm` supplies per-sample starting
/// solutions (indexed by sample, cycled when shorter).
pub fn perturbed_loss_and_grad(
    theta: &[f64],
    problem: &CoProblem,
    pcfg: &PerturbationConfig,
    warm: &[PcSolution],
) -> Result<PerturbedLoss, LossError> {
    pcfg.validate()?;
    problem.check(theta)?;
    let n = theta.len();
    let s_count = pcfg.n_samples;
    let draws = perturbation_draws(pcfg.seed, s_count, n);
    let solved: Vec<Result<(f64, PcSolution), LossError>> = draws
        .par_iter()
        .enumerate()
        .map(|(s, z)| {
            let perturbed: Vec<f64> = theta.iter().zip(z).map(|(t, z)| t + pcfg.epsilon * z).collect();
            let target = problem.target_value(&perturbed);
            let (sol, value) = if pcfg.exact_inner {
                let sol = problem.maximize(&perturbed, Inner::Exact).map_err(|e| inner_err(s, e))?;
                let v = problem.value(&perturbed, &sol);
                (sol, v)
            } else {
                let params = pcfg.inner.with_budget(pcfg.inner.budget, derive_seed(pcfg.inner.seed, &[pcfg.seed, s as u64]));
                let mut starts = vec![problem.target.clone()];
                if !warm.is_empty() {
                    starts.push(warm[s % warm.len()].clone());
                }
                let sol = problem
                    .maximize(&perturbed, Inner::Heuristic { params: &params, warm_start: &starts })
                    .map_err(|e| inner_err(s, e))?;
                let v = problem.value(&perturbed, &sol);
                if v < target {
                    (problem.target.clone(), target)
                } else {
                    (sol, v)
                }
            };
            Ok((value - target, sol))
        })
        .collect();

    let mut gaps = Vec::with_capacity(s_count);
    let mut grad = vec![0.0; n];
    let mut solutions = Vec::with_capacity(s_count);
    for r in solved {
        let (gap, sol) = r?;
        gaps.push(gap);
        for &i in &sol.served {
            grad[i] += 1.0;
        }
        solutions.push(sol);
    }
    let sf = s_count as f64;
    for (g, t) in grad.iter_mut().zip(&problem.target_g) {
        *g = *g / sf - t;
    }
    let loss = gaps.iter().sum::<f64>() / sf;
    let std_error = if s_count > 1 {
        let var = gaps.iter().map(|g| (g - loss).powi(2)).sum::<f64>() / (sf - 1.0);
        (var / sf).sqrt()
    } else {
        0.0
    };
    Ok(PerturbedLoss {
        loss,
        grad,
        std_error,
        solutions,
    })
}

fn inner_err(sample: usize, e: LossError) -> LossError {
    match e {
        LossError::Solver(source) => LossError::Inner { sample, source },
        other => other,
    }
}

/// The constant `|R^e| · max c` over arcs among the depot and the open
/// requests.
pub fn prop1_constant(state: &SystemState, inst: &StaticInstance) -> f64 {
    let locs: Vec<usize> = std::iter::once(DEPOT).chain(state.open.iter().map(|r| r.location)).collect();
    let max_c = locs
        .iter()
        .flat_map(|&a| locs.iter().map(move |&b| (a, b)))
        .map(|(a, b)| inst.cost(a, b))
        .max()
        .unwrap_or(0);
    state.open.len() as f64 * max_c as f64
}

/// `+M` for requests in `dispatched` (ids), `−M` otherwise, in cost units.
pub fn build_prop1_prizes(state: &SystemState, dispatched: &[usize], inst: &StaticInstance) -> Vec<f64> {
    let m = prop1_constant(state, inst);
    state
        .open
        .iter()
        .map(|r| if dispatched.contains(&r.id) { m } else { -m })
        .collect()
}
