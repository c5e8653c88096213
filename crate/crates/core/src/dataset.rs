//! Imitation targets from hindsight: every request of a scenario is known
//! up front, released at the earliest departure of its reveal epoch, and
//! the whole scenario is routed offline. Each offline route is then
//! attributed to the epoch whose departure equals its latest release.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Cost, Route, Seconds, StaticInstance};
use crate::pchgs::{self, HgsParams, PcError, PcInstance, PcRequest};
use crate::rng::derive_seed;
use crate::simulator::{self, decision_cost, DynamicConfig, Decision, OpenRequest, SystemState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleasedRequest {
    pub request: OpenRequest,
    /// Earliest departure of a route serving this request.
    pub release: Seconds,
}

impl ReleasedRequest {
    pub fn new(request: OpenRequest, cfg: &DynamicConfig) -> Self {
        let release = cfg.departure(request.reveal_epoch);
        ReleasedRequest { request, release }
    }
}

#[derive(Debug, Clone, Error)]
pub enum DatasetError {
    #[error("offline solve failed: {0}")]
    Solver(#[from] PcError),
    #[error("request {id} cannot be served even alone from its release time")]
    InfeasibleRequest { id: usize },
    #[error("route with latest release {release} does not leave on an epoch departure")]
    OffGrid { release: Seconds },
    #[error("replay of reconstructed decisions failed: {0}")]
    Replay(#[from] simulator::EpisodeError),
    #[error("config: {0}")]
    Config(#[from] simulator::ConfigError),
    #[error("io: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A state together with the anticipative decision taken in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub instance: String,
    pub scenario_seed: u64,
    pub config: DynamicConfig,
    pub epoch: usize,
    pub time: Seconds,
    pub open_requests: Vec<OpenRequest>,
    pub must_dispatch: Vec<usize>,
    pub target_routes: Vec<Route>,
    /// 0/1 per entry of `open_requests`.
    pub target_served: Vec<u8>,
    /// Negated routing cost of the target routes.
    pub target_h: f64,
}

impl TrainingSample {
    pub fn state(&self) -> SystemState {
        SystemState {
            epoch: self.epoch,
            time: self.time,
            open: self.open_requests.clone(),
        }
    }

    pub fn target_decision(&self) -> Decision {
        Decision {
            routes: self.target_routes.clone(),
        }
    }
}

/// Routes every request at minimum cost, each route leaving at the latest
/// release among the requests it carries. Routes hold request ids.
pub fn solve_offline_with_release(
    requests: &[ReleasedRequest],
    inst: &StaticInstance,
    params: &HgsParams,
) -> Result<Vec<Route>, DatasetError> {
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let base = requests.iter().map(|r| r.release).min().unwrap_or(0);
    let pc_requests: Vec<PcRequest> = requests
        .iter()
        .map(|r| PcRequest::from_stop(r.request.id, &r.request.stop(), r.release))
        .collect();
    let n = pc_requests.len();
    let pc = PcInstance::new(inst, pc_requests, vec![0.0; n], base).all_mandatory();
    for i in 0..n {
        if pc.check_route(&[i]).is_err() {
            return Err(DatasetError::InfeasibleRequest { id: requests[i].request.id });
        }
    }
    let sol = pchgs::solve(&pc, params, &[])?;
    Ok(sol
        .routes
        .iter()
        .map(|r| Route::new(r.iter().map(|&i| pc.requests[i].id).collect()))
        .collect())
}

/// Assigns each route to the epoch whose departure equals the latest
/// release on the route.
pub fn reconstruct_epoch_decisions(
    routes: &[Route],
    requests: &[ReleasedRequest],
    cfg: &DynamicConfig,
) -> Result<BTreeMap<usize, Decision>, DatasetError> {
    let release: BTreeMap<usize, Seconds> = requests.iter().map(|r| (r.request.id, r.release)).collect();
    let mut out: BTreeMap<usize, Decision> = BTreeMap::new();
    for route in routes {
        let latest = route
            .visits
            .iter()
            .map(|id| release.get(id).copied().ok_or(DatasetError::OffGrid { release: Seconds::MIN }))
            .try_fold(Seconds::MIN, |acc, r| r.map(|r| acc.max(r)))?;
        let offset = latest - cfg.dispatch_offset;
        let epoch = if offset >= 0 && offset % cfg.epoch_duration == 0 {
            (offset / cfg.epoch_duration) as usize
        } else {
            return Err(DatasetError::OffGrid { release: latest });
        };
        if epoch >= cfg.n_epochs {
            return Err(DatasetError::OffGrid { release: latest });
        }
        out.entry(epoch).or_default().routes.push(route.clone());
    }
    Ok(out)
}

/// Offline routes and their per-epoch split for one scenario.
#[derive(Debug, Clone)]
pub struct AnticipativeSolution {
    pub requests: Vec<ReleasedRequest>,
    pub routes: Vec<Route>,
    pub decisions: BTreeMap<usize, Decision>,
    pub cost: Cost,
}

pub fn anticipative_solution(inst: &StaticInstance, cfg: &DynamicConfig, params: &HgsParams) -> Result<AnticipativeSolution, DatasetError> {
    cfg.validate(inst)?;
    let requests: Vec<ReleasedRequest> = simulator::sample_scenario(inst, cfg)
        .into_iter()
        .map(|r| ReleasedRequest::new(r, cfg))
        .collect();
    let routes = solve_offline_with_release(&requests, inst, params)?;
    let decisions = reconstruct_epoch_decisions(&routes, &requests, cfg)?;
    let location: BTreeMap<usize, usize> = requests.iter().map(|r| (r.request.id, r.request.location)).collect();
    let cost = routes
        .iter()
        .map(|r| crate::instance::path_cost(inst, r.visits.iter().map(|id| location[id])))
        .sum();
    Ok(AnticipativeSolution {
        requests,
        routes,
        decisions,
        cost,
    })
}

/// Total routing cost of the hindsight solution for the scenario keyed by `cfg.instance_seed`.
pub fn anticipative_baseline_cost(inst: &StaticInstance, cfg: &DynamicConfig, params: &HgsParams) -> Result<Cost, DatasetError> {
    anticipative_solution(inst, cfg, params).map(|s| s.cost)
}

/// Replays the hindsight decisions through the simulator and records one
/// sample per epoch.
pub fn scenario_samples(inst: &StaticInstance, cfg: &DynamicConfig, params: &HgsParams) -> Result<Vec<TrainingSample>, DatasetError> {
    let solution = anticipative_solution(inst, cfg, params)?;
    let mut samples = Vec::with_capacity(cfg.n_epochs);
    simulator::run_episode(inst, cfg, |state: &SystemState| -> Result<Decision, String> {
        let decision = solution.decisions.get(&state.epoch).cloned().unwrap_or_default();
        let served: std::collections::BTreeSet<usize> = decision.dispatched_ids().into_iter().collect();
        let cost = decision_cost(state, inst, &decision);
        samples.push(TrainingSample {
            instance: inst.name.clone(),
            scenario_seed: cfg.instance_seed,
            config: cfg.clone(),
            epoch: state.epoch,
            time: state.time,
            open_requests: state.open.clone(),
            must_dispatch: state.must_dispatch_ids(),
            target_routes: decision.routes.clone(),
            target_served: state.open.iter().map(|r| served.contains(&r.id) as u8).collect(),
            target_h: -(cost as f64),
        });
        Ok(decision)
    })?;
    Ok(samples)
}

/// Scenario seed for scenario `k` of instance `i` under a dataset seed.
pub fn scenario_seed(seed: u64, instance_index: usize, scenario: usize) -> u64 {
    derive_seed(seed, &[instance_index as u64, scenario as u64])
}

/// One sample per epoch for every (instance, scenario) pair, in that order.
pub fn build_dataset(
    instances: &[StaticInstance],
    cfg: &DynamicConfig,
    n_scenarios: usize,
    params: &HgsParams,
    seed: u64,
) -> Result<Vec<TrainingSample>, DatasetError> {
    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..n_scenarios).map(move |k| (i, k)))
        .collect();
    let parts: Vec<Result<Vec<TrainingSample>, DatasetError>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let s = scenario_seed(seed, i, k);
            let hgs = params.with_budget(params.budget, derive_seed(params.seed, &[s]));
            scenario_samples(&instances[i], &cfg.with_seed(s), &hgs)
        })
        .collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[TrainingSample]) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path.as_ref()).map_err(|e| DatasetError::Io(e.to_string()))?;
    let mut w = std::io::BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(s).map_err(|e| DatasetError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| DatasetError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| DatasetError::Io(e.to_string()))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>, DatasetError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| DatasetError::Io(format!("{}: {e}", path.as_ref().display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
