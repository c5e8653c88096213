//! Epoch-based dynamic VRPTW environment.
//!
//! Requests are sampled per epoch from a static instance with a stream keyed
//! only on `(instance_seed, epoch)`, so decisions never perturb what arrives
//! later and competing policies see identical request streams.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{path_cost, schedule, Cost, Route, RouteViolation, Seconds, StaticInstance, Stop};
use crate::rng::{derived_rng, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicConfig {
    pub epoch_duration: Seconds,
    /// Δ: vehicles dispatched in epoch e leave the depot at `t_e + Δ`.
    pub dispatch_offset: Seconds,
    pub n_epochs: usize,
    pub sample_size: usize,
    pub instance_seed: u64,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            epoch_duration: 3600,
            dispatch_offset: 3600,
            n_epochs: 4,
            sample_size: 20,
            instance_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid dynamic config: {0}")]
pub struct ConfigError(pub String);

impl DynamicConfig {
    pub fn with_seed(&self, instance_seed: u64) -> Self {
        DynamicConfig {
            instance_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self, inst: &StaticInstance) -> Result<(), ConfigError> {
        if self.n_epochs == 0 {
            return Err(ConfigError("n_epochs must be positive".into()));
        }
        if self.sample_size == 0 {
            return Err(ConfigError("sample_size must be positive".into()));
        }
        if self.epoch_duration <= 0 {
            return Err(ConfigError("epoch_duration must be positive".into()));
        }
        if self.dispatch_offset < 0 {
            return Err(ConfigError("dispatch_offset must be non-negative".into()));
        }
        if self.n_epochs as Seconds * self.epoch_duration > inst.horizon {
            return Err(ConfigError(format!(
                "{} epochs of {} s exceed the horizon {}",
                self.n_epochs, self.epoch_duration, inst.horizon
            )));
        }
        if self.departure(self.n_epochs - 1) >= inst.horizon {
            return Err(ConfigError(
                "final-epoch dispatches would leave at or after the horizon".into(),
            ));
        }
        if inst.n_customers() == 0 {
            return Err(ConfigError("static instance has no customers to sample".into()));
        }
        Ok(())
    }

    /// `t_e`, the start of epoch `e`.
    pub fn epoch_start(&self, epoch: usize) -> Seconds {
        epoch as Seconds * self.epoch_duration
    }

    /// `t_e + Δ`, the departure time of routes dispatched in epoch `e`.
    pub fn departure(&self, epoch: usize) -> Seconds {
        self.epoch_start(epoch) + self.dispatch_offset
    }

    pub fn is_final(&self, epoch: usize) -> bool {
        epoch + 1 >= self.n_epochs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenRequest {
    pub id: usize,
    pub location: usize,
    pub demand: i64,
    pub service: Seconds,
    pub tw_open: Seconds,
    pub tw_close: Seconds,
    pub reveal_epoch: usize,
    pub must_dispatch: bool,
}

impl OpenRequest {
    pub fn stop(&self) -> Stop {
        Stop {
            location: self.location,
            demand: self.demand,
            service: self.service,
            tw_open: self.tw_open,
            tw_close: self.tw_close,
        }
    }
}

/// Whether a vehicle carrying only `stop` and leaving at `departure` is feasible.
pub fn feasible_alone(inst: &StaticInstance, stop: &Stop, departure: Seconds) -> bool {
    schedule(inst, std::slice::from_ref(stop), departure).is_ok()
}

/// Draws `sample_size` candidates from `rng` and keeps those that can still be
/// served when dispatched in `epoch`. Ids are `id_base + draw index`.
pub fn sample_requests(
    inst: &StaticInstance,
    cfg: &DynamicConfig,
    epoch: usize,
    rng: &mut Rng,
    id_base: usize,
) -> Vec<OpenRequest> {
    let n = inst.n_customers();
    let departure = cfg.departure(epoch);
    let mut out = Vec::new();
    for k in 0..cfg.sample_size {
        let location = rng.random_range(1..=n);
        let demand_row = rng.random_range(1..=n);
        let service_row = rng.random_range(1..=n);
        let tw_row = rng.random_range(1..=n);
        let req = OpenRequest {
            id: id_base + k,
            location,
            demand: inst.demand[demand_row],
            service: inst.service[service_row],
            tw_open: inst.tw[tw_row][0],
            tw_close: inst.tw[tw_row][1],
            reveal_epoch: epoch,
            must_dispatch: false,
        };
        if feasible_alone(inst, &req.stop(), departure) {
            out.push(req);
        }
    }
    out
}

/// The environment's request stream for `epoch`, keyed on `(instance_seed, epoch)`.
pub fn sample_epoch(inst: &StaticInstance, cfg: &DynamicConfig, epoch: usize) -> Vec<OpenRequest> {
    let mut rng = derived_rng(cfg.instance_seed, &[epoch as u64]);
    sample_requests(inst, cfg, epoch, &mut rng, epoch * cfg.sample_size)
}

/// Every request of a scenario, epoch by epoch, as the environment would reveal them.
pub fn sample_scenario(inst: &StaticInstance, cfg: &DynamicConfig) -> Vec<OpenRequest> {
    (0..cfg.n_epochs)
        .flat_map(|e| sample_epoch(inst, cfg, e))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub epoch: usize,
    pub time: Seconds,
    /// Open requests sorted by id.
    pub open: Vec<OpenRequest>,
}

impl SystemState {
    pub fn get(&self, id: usize) -> Option<&OpenRequest> {
        self.open
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.open[i])
    }

    pub fn must_dispatch_ids(&self) -> Vec<usize> {
        self.open.iter().filter(|r| r.must_dispatch).map(|r| r.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }
}

/// Sets `must_dispatch` on every open request that could not be served if
/// postponed: all requests in the final epoch, otherwise those for which a
/// single-request route leaving at `t_{e+1} + Δ` is infeasible.
pub fn classify_must_dispatch(mut state: SystemState, inst: &StaticInstance, cfg: &DynamicConfig) -> SystemState {
    let last = cfg.is_final(state.epoch);
    let next_departure = cfg.departure(state.epoch + 1);
    for r in &mut state.open {
        r.must_dispatch = last || !feasible_alone(inst, &r.stop(), next_departure);
    }
    state
}

pub fn initial_state(inst: &StaticInstance, cfg: &DynamicConfig) -> SystemState {
    let mut open = sample_epoch(inst, cfg, 0);
    open.sort_by_key(|r| r.id);
    classify_must_dispatch(
        SystemState {
            epoch: 0,
            time: cfg.epoch_start(0),
            open,
        },
        inst,
        cfg,
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub routes: Vec<Route>,
}

impl Decision {
    pub fn empty() -> Self {
        Decision::default()
    }

    pub fn dispatched_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.routes.iter().flat_map(|r| r.visits.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionViolation {
    MissingMustDispatch { id: usize },
    UnknownRequest { id: usize },
    DuplicateRequest { id: usize },
    EmptyRoute { route: usize },
    InfeasibleRoute { route: usize, violation: RouteViolation },
}

impl fmt::Display for DecisionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionViolation::MissingMustDispatch { id } => write!(f, "must-dispatch request {id} not dispatched"),
            DecisionViolation::UnknownRequest { id } => write!(f, "request {id} is not open"),
            DecisionViolation::DuplicateRequest { id } => write!(f, "request {id} dispatched twice"),
            DecisionViolation::EmptyRoute { route } => write!(f, "route {route} is empty"),
            DecisionViolation::InfeasibleRoute { route, violation } => write!(f, "route {route}: {violation}"),
        }
    }
}

/// Checks coverage, disjointness, membership and per-route feasibility at
/// departure `t_e + Δ`. Collects every violation instead of stopping early.
pub fn validate_decision(
    state: &SystemState,
    inst: &StaticInstance,
    cfg: &DynamicConfig,
    decision: &Decision,
) -> Result<(), Vec<DecisionViolation>> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    let departure = cfg.departure(state.epoch);
    for (ri, route) in decision.routes.iter().enumerate() {
        if route.visits.is_empty() {
            violations.push(DecisionViolation::EmptyRoute { route: ri });
            continue;
        }
        let mut stops = Vec::with_capacity(route.visits.len());
        let mut known = true;
        for &id in &route.visits {
            if !seen.insert(id) {
                violations.push(DecisionViolation::DuplicateRequest { id });
            }
            match state.get(id) {
                Some(r) => stops.push(r.stop()),
                None => {
                    violations.push(DecisionViolation::UnknownRequest { id });
                    known = false;
                }
            }
        }
        if known {
            if let Err(violation) = schedule(inst, &stops, departure) {
                violations.push(DecisionViolation::InfeasibleRoute { route: ri, violation });
            }
        }
    }
    for r in &state.open {
        if r.must_dispatch && !seen.contains(&r.id) {
            violations.push(DecisionViolation::MissingMustDispatch { id: r.id });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Routing cost of a decision over the state's request locations.
pub fn decision_cost(state: &SystemState, inst: &StaticInstance, decision: &Decision) -> Cost {
    decision
        .routes
        .iter()
        .map(|route| {
            path_cost(
                inst,
                route
                    .visits
                    .iter()
                    .map(|&id| state.get(id).expect("decision references open requests").location),
            )
        })
        .sum()
}

/// Applies a validated decision and reveals the next epoch's requests.
/// Past the final epoch the returned state has `epoch == n_epochs` and no
/// new arrivals.
pub fn transition(
    state: &SystemState,
    decision: &Decision,
    inst: &StaticInstance,
    cfg: &DynamicConfig,
) -> Result<SystemState, Vec<DecisionViolation>> {
    validate_decision(state, inst, cfg, decision)?;
    let dispatched: BTreeSet<usize> = decision.dispatched_ids().into_iter().collect();
    let next_epoch = state.epoch + 1;
    let mut open: Vec<OpenRequest> = state
        .open
        .iter()
        .filter(|r| !dispatched.contains(&r.id))
        .cloned()
        .collect();
    if next_epoch < cfg.n_epochs {
        open.extend(sample_epoch(inst, cfg, next_epoch));
    }
    open.sort_by_key(|r| r.id);
    let next = SystemState {
        epoch: next_epoch,
        time: cfg.epoch_start(next_epoch),
        open,
    };
    Ok(if next_epoch < cfg.n_epochs {
        classify_must_dispatch(next, inst, cfg)
    } else {
        next
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub dispatched: Vec<usize>,
    pub routes: Vec<Route>,
    pub cost: Cost,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub total_cost: Cost,
    pub per_epoch: Vec<EpochRecord>,
    /// Ids of every request the environment revealed.
    pub sampled: Vec<usize>,
}

impl EpisodeResult {
    pub fn wall_time_s(&self) -> f64 {
        self.per_epoch.iter().map(|e| e.wall_time_s).sum()
    }
}

/// The machine-readable record of one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: DynamicConfig,
    pub per_epoch: Vec<EpochRecord>,
    pub total_cost: Cost,
    pub sampled: Vec<usize>,
}

impl RunRecord {
    pub fn new(cfg: &DynamicConfig, result: &EpisodeResult) -> Self {
        RunRecord {
            config: cfg.clone(),
            per_epoch: result.per_epoch.clone(),
            total_cost: result.total_cost,
            sampled: result.sampled.clone(),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum EpisodeError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("policy failed in epoch {epoch}: {message}")]
    Policy { epoch: usize, message: String },
    #[error("invalid decision in epoch {epoch}: {}", join_violations(.violations))]
    InvalidDecision {
        epoch: usize,
        violations: Vec<DecisionViolation>,
    },
}

fn join_violations(v: &[DecisionViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Runs one full episode, validating every decision the policy returns.
pub fn run_episode<F, E>(inst: &StaticInstance, cfg: &DynamicConfig, mut policy: F) -> Result<EpisodeResult, EpisodeError>
where
    F: FnMut(&SystemState) -> Result<Decision, E>,
    E: fmt::Display,
{
    cfg.validate(inst)?;
    let mut state = initial_state(inst, cfg);
    let mut sampled: Vec<usize> = state.open.iter().map(|r| r.id).collect();
    let mut per_epoch = Vec::with_capacity(cfg.n_epochs);
    let mut total_cost = 0;
    while state.epoch < cfg.n_epochs {
        let start = Instant::now();
        let decision = policy(&state).map_err(|e| EpisodeError::Policy {
            epoch: state.epoch,
            message: e.to_string(),
        })?;
        let wall_time_s = start.elapsed().as_secs_f64();
        let cost = match validate_decision(&state, inst, cfg, &decision) {
            Ok(()) => decision_cost(&state, inst, &decision),
            Err(violations) => {
                return Err(EpisodeError::InvalidDecision {
                    epoch: state.epoch,
                    violations,
                })
            }
        };
        total_cost += cost;
        let next = transition(&state, &decision, inst, cfg).map_err(|violations| EpisodeError::InvalidDecision {
            epoch: state.epoch,
            violations,
        })?;
        per_epoch.push(EpochRecord {
            epoch: state.epoch,
            dispatched: decision.dispatched_ids(),
            routes: decision.routes,
            cost,
            wall_time_s,
        });
        let known: BTreeSet<usize> = state.open.iter().map(|r| r.id).collect();
        sampled.extend(next.open.iter().map(|r| r.id).filter(|id| !known.contains(id)));
        state = next;
    }
    sampled.sort_unstable();
    Ok(EpisodeResult {
        total_cost,
        per_epoch,
        sampled,
    })
}

/// Requests with their reveal epochs, grouped as the environment revealed them.
pub fn requests_by_epoch(requests: &[OpenRequest]) -> BTreeMap<usize, Vec<&OpenRequest>> {
    let mut map: BTreeMap<usize, Vec<&OpenRequest>> = BTreeMap::new();
    for r in requests {
        map.entry(r.reveal_epoch).or_default().push(r);
    }
    map
}
