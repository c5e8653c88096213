//! Prize-collecting VRPTW: a hybrid genetic search over incomplete giant
//! tours, and an exhaustive solver for small instances.
//!
//! A [`PcInstance`] maximizes collected prizes minus routing cost. Requests
//! in `forced_in` must be served, requests in `forced_out` must not. With
//! every request forced in and zero prizes it is a plain VRPTW; with
//! per-request release times each route leaves at the latest release of the
//! requests it carries, which is how offline anticipative solves are posed.

mod brute_force;
mod context;
mod genetic;
mod individual;
mod local_search;
mod operators;
mod params;
mod population;
mod preprocess;
mod split;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Cost, RouteViolation, Seconds, StaticInstance, Stop, DEPOT};
use crate::simulator::SystemState;

pub use brute_force::{brute_force_solve, ExactSolver, BRUTE_FORCE_LIMIT};
pub use context::{Penalties, SearchContext};
pub use genetic::{solve, solve_with_stats, SolveStats};
pub use individual::{broken_pairs_distance, Individual};
pub use local_search::LocalSearch;
pub use operators::{mutate_random_remove_insert, optimize_request_set, srex_crossover, MutationOutcome};
pub use params::{Budget, HgsParams};
pub use population::Population;
pub use preprocess::{preprocess, ForcedAdditions};

/// One request of a prize-collecting instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcRequest {
    /// External id, used only for reporting.
    pub id: usize,
    pub location: usize,
    pub demand: i64,
    pub service: Seconds,
    pub tw_open: Seconds,
    pub tw_close: Seconds,
    /// Earliest departure of any route serving this request.
    pub release: Seconds,
}

impl PcRequest {
    pub fn from_stop(id: usize, stop: &Stop, release: Seconds) -> Self {
        PcRequest {
            id,
            location: stop.location,
            demand: stop.demand,
            service: stop.service,
            tw_open: stop.tw_open,
            tw_close: stop.tw_close,
            release,
        }
    }
}

/// A prize-annotated routing problem. Request indices (positions in
/// `requests`) are used for routes and forced sets; the travel matrix is
/// restricted to the depot (row 0) followed by the requests in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcInstance {
    pub requests: Vec<PcRequest>,
    pub prizes: Vec<f64>,
    pub travel: Vec<Vec<Seconds>>,
    /// Depot then request coordinates; only used to order routes in crossover.
    pub coords: Vec<[i64; 2]>,
    pub capacity: i64,
    pub horizon: Seconds,
    pub departure: Seconds,
    pub forced_in: BTreeSet<usize>,
    pub forced_out: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("prize of request {index} is not finite")]
    NonFinitePrize { index: usize },
    #[error("request {index} qualifies as both certainly profitable and certainly unprofitable")]
    ContradictoryForcing { index: usize },
    #[error("forced request {index} cannot be served even on its own route")]
    Infeasible { index: usize },
    #[error("instance has {n} requests; exhaustive search supports at most {limit}")]
    TooLarge { n: usize, limit: usize },
}

impl PcInstance {
    /// Restricts `inst` to the given requests with a common base departure.
    pub fn new(inst: &StaticInstance, requests: Vec<PcRequest>, prizes: Vec<f64>, departure: Seconds) -> Self {
        let locs: Vec<usize> = std::iter::once(DEPOT).chain(requests.iter().map(|r| r.location)).collect();
        let travel = locs
            .iter()
            .map(|&a| locs.iter().map(|&b| inst.travel_time(a, b)).collect())
            .collect();
        let coords = locs.iter().map(|&l| inst.coords[l]).collect();
        PcInstance {
            requests,
            prizes,
            travel,
            coords,
            capacity: inst.capacity,
            horizon: inst.horizon,
            departure,
            forced_in: BTreeSet::new(),
            forced_out: BTreeSet::new(),
        }
    }

    /// The one-epoch problem of `state`: every open request may leave at
    /// `departure` and must-dispatch requests are forced in.
    pub fn for_state(inst: &StaticInstance, state: &SystemState, departure: Seconds, prizes: Vec<f64>) -> Self {
        let requests = state
            .open
            .iter()
            .map(|r| PcRequest::from_stop(r.id, &r.stop(), departure))
            .collect();
        let mut pc = PcInstance::new(inst, requests, prizes, departure);
        pc.forced_in = state.open.iter().enumerate().filter(|(_, r)| r.must_dispatch).map(|(i, _)| i).collect();
        pc
    }

    /// Index of each request id.
    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.requests.iter().position(|r| r.id == id)
    }

    /// Every request forced in with zero prizes: a VRPTW minimizing cost.
    pub fn all_mandatory(mut self) -> Self {
        self.prizes = vec![0.0; self.requests.len()];
        self.forced_in = (0..self.requests.len()).collect();
        self.forced_out.clear();
        self
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Cost of arc between request indices; `None` denotes the depot.
    #[inline]
    pub fn cost(&self, from: Option<usize>, to: Option<usize>) -> Cost {
        self.travel[from.map_or(0, |i| i + 1)][to.map_or(0, |i| i + 1)]
    }

    /// Largest arc cost among the depot and the requests.
    pub fn max_cost(&self) -> Cost {
        self.travel.iter().flat_map(|r| r.iter().copied()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), PcError> {
        let n = self.requests.len();
        if self.prizes.len() != n {
            return Err(PcError::Invalid(format!("{} prizes for {n} requests", self.prizes.len())));
        }
        if self.travel.len() != n + 1 || self.travel.iter().any(|r| r.len() != n + 1) {
            return Err(PcError::Invalid("travel matrix must be (n+1)×(n+1)".into()));
        }
        if self.coords.len() != n + 1 {
            return Err(PcError::Invalid("coords must list the depot and every request".into()));
        }
        if let Some(i) = self.prizes.iter().position(|p| !p.is_finite()) {
            return Err(PcError::NonFinitePrize { index: i });
        }
        if let Some(&i) = self.forced_in.intersection(&self.forced_out).next() {
            return Err(PcError::Invalid(format!("request {i} is both forced in and forced out")));
        }
        if let Some(&i) = self.forced_in.iter().chain(&self.forced_out).find(|&&i| i >= n) {
            return Err(PcError::Invalid(format!("forced index {i} out of range")));
        }
        if self.capacity <= 0 {
            return Err(PcError::Invalid("capacity must be positive".into()));
        }
        Ok(())
    }

    /// Departure of a route: the base departure or the latest release it carries.
    pub fn route_departure(&self, route: &[usize]) -> Seconds {
        route
            .iter()
            .map(|&i| self.requests[i].release)
            .fold(self.departure, Seconds::max)
    }

    pub fn route_cost(&self, route: &[usize]) -> Cost {
        if route.is_empty() {
            return 0;
        }
        let mut prev = None;
        let mut cost = 0;
        for &i in route {
            cost += self.cost(prev, Some(i));
            prev = Some(i);
        }
        cost + self.cost(prev, None)
    }

    /// Checks one route with waiting allowed and departure at its latest release.
    pub fn check_route(&self, route: &[usize]) -> Result<(), RouteViolation> {
        let mut time = self.route_departure(route);
        let mut load = 0;
        let mut prev = None;
        for (position, &i) in route.iter().enumerate() {
            let r = &self.requests[i];
            time += self.cost(prev, Some(i));
            if time > r.tw_close {
                return Err(RouteViolation::TimeWindow {
                    position,
                    arrival: time,
                    close: r.tw_close,
                });
            }
            load += r.demand;
            if load > self.capacity {
                return Err(RouteViolation::Capacity {
                    position,
                    load,
                    capacity: self.capacity,
                });
            }
            time = time.max(r.tw_open) + r.service;
            prev = Some(i);
        }
        let return_time = time + self.cost(prev, None);
        if return_time > self.horizon {
            return Err(RouteViolation::HorizonReturn {
                return_time,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Prizes collected minus routing cost, computed from the routes alone.
    pub fn objective_of(&self, routes: &[Vec<usize>]) -> f64 {
        let prize: f64 = routes.iter().flatten().map(|&i| self.prizes[i]).sum();
        let cost: Cost = routes.iter().map(|r| self.route_cost(r)).sum();
        prize - cost as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Iterations,
    WallTime,
    Exhaustive,
}

/// A feasible route set. Routes and `served` hold request indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcSolution {
    pub routes: Vec<Vec<usize>>,
    pub served: Vec<usize>,
    pub objective: f64,
    pub cost: Cost,
    pub iterations: u64,
    pub budget_mode: BudgetMode,
}

impl PcSolution {
    pub fn from_routes(inst: &PcInstance, mut routes: Vec<Vec<usize>>, iterations: u64, budget_mode: BudgetMode) -> Self {
        routes.retain(|r| !r.is_empty());
        let mut served: Vec<usize> = routes.iter().flatten().copied().collect();
        served.sort_unstable();
        let cost = routes.iter().map(|r| inst.route_cost(r)).sum();
        let objective = inst.objective_of(&routes);
        PcSolution {
            routes,
            served,
            objective,
            cost,
            iterations,
            budget_mode,
        }
    }

    pub fn empty(budget_mode: BudgetMode) -> Self {
        PcSolution {
            routes: Vec::new(),
            served: Vec::new(),
            objective: 0.0,
            cost: 0,
            iterations: 0,
            budget_mode,
        }
    }

    /// 0/1 served indicator over all requests of `inst`.
    pub fn served_indicator(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for &i in &self.served {
            g[i] = 1.0;
        }
        g
    }

    /// Whether this solution is preferred over `other`: higher objective,
    /// then fewer routes, then the lexicographically smaller served set.
    pub fn better_than(&self, other: &PcSolution) -> bool {
        prefer(
            (self.objective, self.routes.len(), &self.served),
            (other.objective, other.routes.len(), &other.served),
        )
    }

    /// The serialized form with request ids in place of indices.
    pub fn to_record(&self, inst: &PcInstance) -> PcSolutionRecord {
        let id = |i: &usize| inst.requests[*i].id;
        PcSolutionRecord {
            routes: self.routes.iter().map(|r| r.iter().map(id).collect()).collect(),
            served: self.served.iter().map(id).collect(),
            objective: self.objective,
            iterations: self.iterations,
            budget_mode: self.budget_mode,
        }
    }
}

pub(crate) const OBJ_TOL: f64 = 1e-9;

pub(crate) fn prefer(a: (f64, usize, &[usize]), b: (f64, usize, &[usize])) -> bool {
    if a.0 > b.0 + OBJ_TOL {
        return true;
    }
    if a.0 < b.0 - OBJ_TOL {
        return false;
    }
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    a.2 < b.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcSolutionRecord {
    pub routes: Vec<Vec<usize>>,
    pub served: Vec<usize>,
    pub objective: f64,
    pub iterations: u64,
    pub budget_mode: BudgetMode,
}


#[cfg(test)]
mod tests {
    use super::test_support::random_instance;
    use super::*;

    #[test]
    fn objective_audit_matches_manual_sum() {
        let inst = random_instance(4, 1);
        let routes = vec![vec![0, 2], vec![3]];
        let manual = inst.prizes[0] + inst.prizes[2] + inst.prizes[3]
            - (inst.travel[0][1] + inst.travel[1][3] + inst.travel[3][0] + inst.travel[0][4] + inst.travel[4][0]) as f64;
        assert!((inst.objective_of(&routes) - manual).abs() < 1e-9);
    }

    #[test]
    fn tie_break_prefers_fewer_routes_then_smaller_set() {
        assert!(prefer((1.0, 1, &[0, 1]), (1.0, 2, &[0, 1])));
        assert!(prefer((1.0, 1, &[0, 1]), (1.0, 1, &[0, 2])));
        assert!(!prefer((1.0, 1, &[0, 2]), (1.0 + 1e-6, 1, &[0, 1])));
    }

    #[test]
    fn release_delays_departure() {
        let mut inst = random_instance(3, 2);
        inst.requests[1].release = 500;
        assert_eq!(inst.route_departure(&[0, 1]), 500);
        assert_eq!(inst.route_departure(&[0, 2]), 0);
    }
}
