//! Dispatch policies: each maps a [`SystemState`] to a [`Decision`].
//!
//! Every policy decides a dispatch set and then routes it with the
//! all-mandatory solver, except ML-CO, which routes its own prize-collecting
//! solution. Random draws inside a policy come from a stream keyed on the
//! policy seed, the scenario seed and the epoch, never from the
//! environment's stream.

use std::collections::BTreeSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, ReleasedRequest};
use crate::instance::{Route, StaticInstance};
use crate::learning::{extract_features, prize_scale, ModelError, PrizeModel};
use crate::pchgs::{self, Budget, HgsParams, PcError, PcInstance};
use crate::rng::{derive_seed, derived_rng, Rng};
use crate::simulator::{sample_requests, DynamicConfig, Decision, SystemState};

/// Ids of sampled future requests start here so they never collide with
/// the environment's ids.
pub const SCENARIO_ID_BASE: usize = 1 << 40;

/// Share of a scenario-based policy's budget spent on scenario solves.
pub const SCENARIO_BUDGET_SHARE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Greedy,
    Lazy,
    Random,
    RollingHorizon,
    MonteCarlo,
    MlCo,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Greedy,
        PolicyKind::Lazy,
        PolicyKind::Random,
        PolicyKind::RollingHorizon,
        PolicyKind::MonteCarlo,
        PolicyKind::MlCo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Lazy => "lazy",
            PolicyKind::Random => "random",
            PolicyKind::RollingHorizon => "rolling_horizon",
            PolicyKind::MonteCarlo => "monte_carlo",
            PolicyKind::MlCo => "ml_co",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_iters: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scenarios")]
    pub n_scenarios: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Path of the model file, for ML-CO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Search parameters; the budget is overridden per decision.
    #[serde(default)]
    pub hgs: HgsParams,
}

fn default_scenarios() -> usize {
    9
}

fn default_threshold() -> f64 {
    0.5
}

pub const DEFAULT_BUDGET_ITERS: u64 = 1000;

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            budget_s: None,
            budget_iters: None,
            seed: 0,
            n_scenarios: default_scenarios(),
            threshold: default_threshold(),
            model: None,
            hgs: HgsParams::default(),
        }
    }

    /// Per-epoch budget; an iteration cap wins over a time limit.
    pub fn budget(&self) -> Budget {
        match (self.budget_iters, self.budget_s) {
            (Some(n), _) => Budget::Iterations(n),
            (None, Some(s)) => Budget::Seconds(s),
            (None, None) => Budget::Iterations(DEFAULT_BUDGET_ITERS),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.n_scenarios == 0 {
            return Err(PolicyError::Config("n_scenarios must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(PolicyError::Config(format!("threshold must lie in (0, 1], got {}", self.threshold)));
        }
        if let Some(s) = self.budget_s {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(PolicyError::Config("budget_s must be non-negative".into()));
            }
        }
        self.hgs.validate().map_err(PolicyError::Config)
    }

    /// Minimum number of scenarios that must select a request.
    pub fn votes_needed(&self) -> usize {
        ((self.threshold * self.n_scenarios as f64) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Error)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    Config(String),
    #[error("ml_co policy requires a model")]
    MissingModel,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("solver: {0}")]
    Solver(#[from] PcError),
    #[error("scenario solve: {0}")]
    Scenario(#[from] DatasetError),
}

/// A configured policy, ready to decide.
#[derive(Debug, Clone)]
pub struct Policy {
    pub spec: PolicySpec,
    pub model: Option<PrizeModel>,
}

impl Policy {
    pub fn new(spec: PolicySpec, model: Option<PrizeModel>) -> Result<Self, PolicyError> {
        spec.validate()?;
        if spec.kind == PolicyKind::MlCo {
            let m = model.as_ref().ok_or(PolicyError::MissingModel)?;
            m.validate()?;
        }
        Ok(Policy { spec, model })
    }

    pub fn decide(&self, state: &SystemState, inst: &StaticInstance, cfg: &DynamicConfig) -> Result<Decision, PolicyError> {
        if state.is_empty() {
            return Ok(Decision::empty());
        }
        let spec = &self.spec;
        let budget = spec.budget();
        let seed = derive_seed(spec.seed, &[cfg.instance_seed, state.epoch as u64]);
        let mut rng = derived_rng(seed, &[0]);
        let params = |b: Budget, k: u64| spec.hgs.with_budget(b, derive_seed(seed, &[1, k]));
        match spec.kind {
            PolicyKind::Greedy => route_requests(state, &all_ids(state), inst, cfg, &params(budget, 0)),
            PolicyKind::Lazy => route_requests(state, &state.must_dispatch_ids(), inst, cfg, &params(budget, 0)),
            PolicyKind::Random => {
                let ids = random_dispatch_set(state, &mut rng);
                route_requests(state, &ids, inst, cfg, &params(budget, 0))
            }
            PolicyKind::RollingHorizon | PolicyKind::MonteCarlo => {
                let n = if spec.kind == PolicyKind::RollingHorizon { 1 } else { spec.n_scenarios };
                let needed = if n == 1 { 1 } else { spec.votes_needed() };
                let per_scenario = budget.scaled(SCENARIO_BUDGET_SHARE / n as f64);
                let ids = scenario_vote(state, inst, cfg, n, needed, |k| params(per_scenario, 10 + k as u64), seed)?;
                route_requests(state, &ids, inst, cfg, &params(budget.scaled(1.0 - SCENARIO_BUDGET_SHARE), 0))
            }
            PolicyKind::MlCo => {
                let model = self.model.as_ref().ok_or(PolicyError::MissingModel)?;
                decide_ml_co(state, inst, cfg, model, &params(budget, 0))
            }
        }
    }
}

fn all_ids(state: &SystemState) -> Vec<usize> {
    state.open.iter().map(|r| r.id).collect()
}

/// Routes exactly the requests in `ids` at minimum cost from this epoch's
/// departure.
pub fn route_requests(
    state: &SystemState,
    ids: &[usize],
    inst: &StaticInstance,
    cfg: &DynamicConfig,
    params: &HgsParams,
) -> Result<Decision, PolicyError> {
    if ids.is_empty() {
        return Ok(Decision::empty());
    }
    let wanted: BTreeSet<usize> = ids.iter().copied().collect();
    let subset = SystemState {
        epoch: state.epoch,
        time: state.time,
        open: state.open.iter().filter(|r| wanted.contains(&r.id)).cloned().collect(),
    };
    let n = subset.open.len();
    let pc = PcInstance::for_state(inst, &subset, cfg.departure(state.epoch), vec![0.0; n]).all_mandatory();
    let sol = pchgs::solve(&pc, params, &[])?;
    Ok(to_decision(&pc, &sol.routes))
}

fn to_decision(pc: &PcInstance, routes: &[Vec<usize>]) -> Decision {
    Decision {
        routes: routes
            .iter()
            .map(|r| Route::new(r.iter().map(|&i| pc.requests[i].id).collect()))
            .collect(),
    }
}

/// Must-dispatch requests plus each postponable one with probability 1/2.
pub fn random_dispatch_set(state: &SystemState, rng: &mut Rng) -> Vec<usize> {
    state
        .open
        .iter()
        .filter(|r| r.must_dispatch || rng.random_bool(0.5))
        .map(|r| r.id)
        .collect()
}

/// Result of one sampled-future offline solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDispatch {
    /// Current requests chosen for dispatch, must-dispatch included.
    pub dispatch: BTreeSet<usize>,
    /// The offline routes over current and sampled requests.
    pub routes: Vec<Route>,
}

/// Samples the remaining epochs, routes current and future requests
/// offline, and selects current requests that share a route with a
/// must-dispatch request.
pub fn scenario_dispatch_set(
    state: &SystemState,
    inst: &StaticInstance,
    cfg: &DynamicConfig,
    params: &HgsParams,
    scenario_seed: u64,
) -> Result<ScenarioDispatch, PolicyError> {
    let must: BTreeSet<usize> = state.must_dispatch_ids().into_iter().collect();
    if must.is_empty() {
        return Ok(ScenarioDispatch {
            dispatch: BTreeSet::new(),
            routes: Vec::new(),
        });
    }
    let departure = cfg.departure(state.epoch);
    let mut requests: Vec<ReleasedRequest> = state
        .open
        .iter()
        .map(|r| ReleasedRequest {
            request: r.clone(),
            release: departure,
        })
        .collect();
    let mut rng = derived_rng(scenario_seed, &[0]);
    for epoch in state.epoch + 1..cfg.n_epochs {
        let base = SCENARIO_ID_BASE + epoch * cfg.sample_size;
        for r in sample_requests(inst, cfg, epoch, &mut rng, base) {
            requests.push(ReleasedRequest::new(r, cfg));
        }
    }
    let routes = dataset::solve_offline_with_release(&requests, inst, params)?;
    let current: BTreeSet<usize> = state.open.iter().map(|r| r.id).collect();
    let mut dispatch = must.clone();
    for route in &routes {
        if route.visits.iter().any(|id| must.contains(id)) {
            dispatch.extend(route.visits.iter().filter(|id| current.contains(id)));
        }
    }
    Ok(ScenarioDispatch { dispatch, routes })
}

/// Dispatches must-dispatch requests plus every postponable request chosen
/// in at least `needed` of `n` sampled scenarios.
pub fn scenario_vote(
    state: &SystemState,
    inst: &StaticInstance,
    cfg: &DynamicConfig,
    n: usize,
    needed: usize,
    params: impl Fn(usize) -> HgsParams + Sync,
    seed: u64,
) -> Result<Vec<usize>, PolicyError> {
    let must = state.must_dispatch_ids();
    if must.is_empty() {
        return Ok(Vec::new());
    }
    let sets: Vec<Result<ScenarioDispatch, PolicyError>> = (0..n)
        .into_par_iter()
        .map(|k| scenario_dispatch_set(state, inst, cfg, &params(k), derive_seed(seed, &[2, k as u64])))
        .collect();
    let mut votes = vec![0usize; state.open.len()];
    for s in sets {
        let s = s?;
        for (v, r) in votes.iter_mut().zip(&state.open) {
            if s.dispatch.contains(&r.id) {
                *v += 1;
            }
        }
    }
    Ok(state
        .open
        .iter()
        .zip(&votes)
        .filter(|(r, &v)| r.must_dispatch || v >= needed)
        .map(|(r, _)| r.id)
        .collect())
}

/// Predicts prizes, forces must-dispatch requests in, and returns the
/// prize-collecting solution's routes.
pub fn decide_ml_co(
    state: &SystemState,
    inst: &StaticInstance,
    cfg: &DynamicConfig,
    model: &PrizeModel,
    params: &HgsParams,
) -> Result<Decision, PolicyError> {
    if state.is_empty() {
        return Ok(Decision::empty());
    }
    let features = extract_features(state, inst, cfg, &model.feature_config);
    let theta = model.predict(&features)?;
    let scale = prize_scale(inst);
    let mut pc = PcInstance::for_state(inst, state, cfg.departure(state.epoch), theta.iter().map(|t| t * scale).collect());
    // a prize above any round trip keeps forced requests attractive to
    // every operator, not only to the forcing logic
    let big = 2.0 * pc.max_cost() as f64 + 1.0;
    for &i in &pc.forced_in.clone() {
        pc.prizes[i] = pc.prizes[i].max(big);
    }
    let sol = pchgs::solve(&pc, params, &[])?;
    Ok(to_decision(&pc, &sol.routes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_instance, GeneratorConfig};
    use crate::learning::{FeatureConfig, FeatureSet};
    use crate::simulator::{initial_state, run_episode, OpenRequest};

    fn setup(seed: u64) -> (StaticInstance, DynamicConfig) {
        let inst = generate_instance(&GeneratorConfig {
            n_customers: 30,
            seed,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let cfg = DynamicConfig {
            sample_size: 8,
            n_epochs: 4,
            instance_seed: seed,
            ..DynamicConfig::default()
        };
        (inst, cfg)
    }

    fn spec(kind: PolicyKind) -> PolicySpec {
        PolicySpec {
            budget_iters: Some(100),
            n_scenarios: 3,
            ..PolicySpec::new(kind)
        }
    }

    fn with_flags(mut state: SystemState, flags: &[bool]) -> SystemState {
        for (r, &f) in state.open.iter_mut().zip(flags) {
            r.must_dispatch = f;
        }
        state
    }

    #[test]
    fn empty_state_gives_empty_decision() {
        let (inst, cfg) = setup(1);
        let state = SystemState { epoch: 0, time: 0, open: vec![] };
        for kind in [PolicyKind::Greedy, PolicyKind::Lazy, PolicyKind::Random, PolicyKind::RollingHorizon, PolicyKind::MonteCarlo] {
            let p = Policy::new(spec(kind), None).unwrap();
            assert!(p.decide(&state, &inst, &cfg).unwrap().routes.is_empty());
        }
    }

    #[test]
    fn dispatch_sets_follow_definitions_over_an_episode() {
        let (inst, cfg) = setup(2);
        for kind in [PolicyKind::Greedy, PolicyKind::Lazy] {
            let p = Policy::new(spec(kind), None).unwrap();
            run_episode(&inst, &cfg, |s: &SystemState| {
                let d = p.decide(s, &inst, &cfg)?;
                let expect: Vec<usize> = match kind {
                    PolicyKind::Greedy => all_ids(s),
                    _ => s.must_dispatch_ids(),
                };
                assert_eq!(d.dispatched_ids(), expect);
                Ok::<_, PolicyError>(d)
            })
            .unwrap();
        }
    }

    #[test]
    fn scenario_policies_without_must_dispatch_wait() {
        let (inst, cfg) = setup(3);
        let state = with_flags(initial_state(&inst, &cfg), &[false; 64]);
        for kind in [PolicyKind::Lazy, PolicyKind::RollingHorizon, PolicyKind::MonteCarlo] {
            let p = Policy::new(spec(kind), None).unwrap();
            assert!(p.decide(&state, &inst, &cfg).unwrap().routes.is_empty());
        }
    }

    #[test]
    fn final_epoch_matches_greedy() {
        let (inst, cfg) = setup(4);
        let cfg = DynamicConfig { n_epochs: 1, ..cfg };
        let state = initial_state(&inst, &cfg);
        assert!(state.open.iter().all(|r| r.must_dispatch));
        let greedy = Policy::new(spec(PolicyKind::Greedy), None).unwrap().decide(&state, &inst, &cfg).unwrap();
        for kind in [PolicyKind::Lazy, PolicyKind::Random, PolicyKind::RollingHorizon, PolicyKind::MonteCarlo] {
            let d = Policy::new(spec(kind), None).unwrap().decide(&state, &inst, &cfg).unwrap();
            assert_eq!(d.dispatched_ids(), greedy.dispatched_ids(), "{kind}");
        }
    }

    #[test]
    fn rolling_horizon_selection_shares_routes_with_must_dispatch() {
        for seed in 0..6 {
            let (inst, cfg) = setup(10 + seed);
            let state = initial_state(&inst, &cfg);
            let flags: Vec<bool> = (0..state.open.len()).map(|i| i % 3 == 0).collect();
            let state = with_flags(state, &flags);
            let params = HgsParams {
                budget: Budget::Iterations(80),
                ..HgsParams::default()
            };
            let out = scenario_dispatch_set(&state, &inst, &cfg, &params, seed).unwrap();
            let must: BTreeSet<usize> = state.must_dispatch_ids().into_iter().collect();
            assert!(must.is_subset(&out.dispatch));
            for id in out.dispatch.difference(&must) {
                let route = out.routes.iter().find(|r| r.visits.contains(id)).unwrap();
                assert!(route.visits.iter().any(|v| must.contains(v)), "seed {seed}: {id} dispatched alone");
            }
            // every current request appears exactly once in the offline routes
            for r in &state.open {
                assert_eq!(out.routes.iter().flat_map(|x| &x.visits).filter(|&&v| v == r.id).count(), 1);
            }
        }
    }

    #[test]
    fn vote_threshold_arithmetic() {
        let s = PolicySpec {
            n_scenarios: 9,
            threshold: 0.5,
            ..PolicySpec::new(PolicyKind::MonteCarlo)
        };
        assert_eq!(s.votes_needed(), 5);
        let s = PolicySpec { threshold: 1.0, ..s };
        assert_eq!(s.votes_needed(), 9);
        let s = PolicySpec { n_scenarios: 10, threshold: 0.5, ..s };
        assert_eq!(s.votes_needed(), 5);
        assert!(PolicySpec { threshold: 0.0, ..s.clone() }.validate().is_err());
        assert!(PolicySpec { n_scenarios: 0, ..s }.validate().is_err());
    }

    #[test]
    fn single_scenario_vote_equals_rolling_horizon() {
        let (inst, cfg) = setup(5);
        let state = initial_state(&inst, &cfg);
        let flags: Vec<bool> = (0..state.open.len()).map(|i| i % 2 == 0).collect();
        let state = with_flags(state, &flags);
        let params = HgsParams {
            budget: Budget::Iterations(60),
            ..HgsParams::default()
        };
        let seed = 77;
        let rh = scenario_dispatch_set(&state, &inst, &cfg, &params, derive_seed(seed, &[2, 0])).unwrap();
        let vote = scenario_vote(&state, &inst, &cfg, 1, 1, |_| params.clone(), seed).unwrap();
        assert_eq!(vote, rh.dispatch.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn random_inclusion_frequency_is_one_half() {
        let req = |id, must| OpenRequest {
            id,
            location: 1,
            demand: 1,
            service: 0,
            tw_open: 0,
            tw_close: 100,
            reveal_epoch: 0,
            must_dispatch: must,
        };
        let state = SystemState {
            epoch: 0,
            time: 0,
            open: vec![req(0, true), req(1, false), req(2, false)],
        };
        let trials = 10_000;
        let mut counts = [0usize; 3];
        let mut rng = crate::rng::rng_from(9);
        for _ in 0..trials {
            for id in random_dispatch_set(&state, &mut rng) {
                counts[id] += 1;
            }
        }
        assert_eq!(counts[0], trials);
        // binomial(10^4, 1/2): σ = 50
        for &c in &counts[1..] {
            assert!((c as f64 - 5000.0).abs() <= 150.0, "{c}");
        }
        let a = random_dispatch_set(&state, &mut crate::rng::rng_from(4));
        let b = random_dispatch_set(&state, &mut crate::rng::rng_from(4));
        assert_eq!(a, b);
    }

    #[test]
    fn ml_co_serves_must_dispatch_and_nothing_else_at_low_prizes() {
        let (inst, cfg) = setup(6);
        let state = initial_state(&inst, &cfg);
        let flags: Vec<bool> = (0..state.open.len()).map(|i| i % 4 == 0).collect();
        let state = with_flags(state, &flags);
        let mut model = PrizeModel::zero_linear(FeatureConfig::identity(FeatureSet::ModelFree));
        model.layers[0].bias[0] = -1e6;
        let policy = Policy::new(spec(PolicyKind::MlCo), Some(model)).unwrap();
        let d = policy.decide(&state, &inst, &cfg).unwrap();
        assert_eq!(d.dispatched_ids(), state.must_dispatch_ids());

        let none = with_flags(state, &[false; 64]);
        assert!(policy.decide(&none, &inst, &cfg).unwrap().routes.is_empty());
    }

    #[test]
    fn ml_co_requires_a_model() {
        assert!(matches!(Policy::new(spec(PolicyKind::MlCo), None), Err(PolicyError::MissingModel)));
    }

    #[test]
    fn decisions_are_reproducible() {
        let (inst, cfg) = setup(7);
        for kind in [PolicyKind::Random, PolicyKind::MonteCarlo] {
            let p = Policy::new(spec(kind), None).unwrap();
            let run = || {
                let r = run_episode(&inst, &cfg, |s: &SystemState| p.decide(s, &inst, &cfg)).unwrap();
                serde_json::to_string(&r).unwrap()
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn spec_json_defaults() {
        let s: PolicySpec = serde_json::from_str(r#"{"kind":"monte_carlo","budget_iters":50}"#).unwrap();
        assert_eq!(s.n_scenarios, 9);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.budget(), Budget::Iterations(50));
        assert_eq!("rolling_horizon".parse::<PolicyKind>().unwrap(), PolicyKind::RollingHorizon);
    }
}
