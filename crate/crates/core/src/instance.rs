//! Static VRPTW instances: loading, validation, and route timing.
//!
//! The travel matrix doubles as the cost matrix: the objective minimizes
//! travel time only, so `cost(i, j)` and `travel_time(i, j)` read the same
//! entry. All quantities are integers (seconds, demand units, cost units).

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Time in integer seconds.
pub type Seconds = i64;
/// Routing cost units (equal to travel seconds).
pub type Cost = i64;

/// Index of the depot row in every static instance.
pub const DEPOT: usize = 0;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("failed to read instance: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse instance: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid instance at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl InstanceError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        InstanceError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// An immutable request universe with its travel-time matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticInstance {
    pub name: String,
    pub capacity: i64,
    pub horizon: Seconds,
    pub coords: Vec<[i64; 2]>,
    pub demand: Vec<i64>,
    pub service: Vec<Seconds>,
    pub tw: Vec<[Seconds; 2]>,
    pub travel: Vec<Vec<Seconds>>,
}

impl StaticInstance {
    /// Parses and validates an instance from its JSON text.
    pub fn from_json_str(text: &str) -> Result<Self, InstanceError> {
        let inst: StaticInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    /// Number of rows including the depot.
    pub fn n_rows(&self) -> usize {
        self.coords.len()
    }

    /// Number of customer rows (depot excluded).
    pub fn n_customers(&self) -> usize {
        self.coords.len().saturating_sub(1)
    }

    #[inline]
    pub fn travel_time(&self, from: usize, to: usize) -> Seconds {
        self.travel[from][to]
    }

    #[inline]
    pub fn cost(&self, from: usize, to: usize) -> Cost {
        self.travel[from][to]
    }

    /// The largest entry of the cost matrix.
    pub fn max_cost(&self) -> Cost {
        self.travel
            .iter()
            .flat_map(|row| row.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// The stop described by static row `row`.
    pub fn stop(&self, row: usize) -> Stop {
        Stop {
            location: row,
            demand: self.demand[row],
            service: self.service[row],
            tw_open: self.tw[row][0],
            tw_close: self.tw[row][1],
        }
    }

    /// Checks every structural invariant, reporting the first offending field.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.coords.len();
        if n < 1 {
            return Err(InstanceError::invalid("coords", "at least the depot row is required"));
        }
        if self.capacity <= 0 {
            return Err(InstanceError::invalid("capacity", "must be positive"));
        }
        if self.horizon < 0 {
            return Err(InstanceError::invalid("horizon", "must be non-negative"));
        }
        for (field, len) in [
            ("demand", self.demand.len()),
            ("service", self.service.len()),
            ("tw", self.tw.len()),
            ("travel", self.travel.len()),
        ] {
            if len != n {
                return Err(InstanceError::invalid(
                    field,
                    format!("has {len} rows, expected {n} (one per coordinate)"),
                ));
            }
        }
        for (i, row) in self.travel.iter().enumerate() {
            if row.len() != n {
                return Err(InstanceError::invalid(
                    format!("travel[{i}]"),
                    format!("has {} columns, expected {n}", row.len()),
                ));
            }
            if row[i] != 0 {
                return Err(InstanceError::invalid(
                    format!("travel[{i}][{i}]"),
                    "diagonal entries must be 0",
                ));
            }
            if let Some(j) = row.iter().position(|&t| t < 0) {
                return Err(InstanceError::invalid(
                    format!("travel[{i}][{j}]"),
                    "travel times must be non-negative",
                ));
            }
        }
        for r in 0..n {
            let [open, close] = self.tw[r];
            if open < 0 || open > close {
                return Err(InstanceError::invalid(
                    format!("tw[{r}]"),
                    format!("window [{open}, {close}] is empty or negative"),
                ));
            }
            if close > self.horizon {
                return Err(InstanceError::invalid(
                    format!("tw[{r}]"),
                    format!("close {close} exceeds horizon {}", self.horizon),
                ));
            }
            if self.demand[r] < 0 || self.demand[r] > self.capacity {
                return Err(InstanceError::invalid(
                    format!("demand[{r}]"),
                    format!("{} not in [0, capacity {}]", self.demand[r], self.capacity),
                ));
            }
            if self.service[r] < 0 {
                return Err(InstanceError::invalid(
                    format!("service[{r}]"),
                    "must be non-negative",
                ));
            }
        }
        if self.demand[DEPOT] != 0 {
            return Err(InstanceError::invalid("demand[0]", "depot demand must be 0"));
        }
        if self.service[DEPOT] != 0 {
            return Err(InstanceError::invalid("service[0]", "depot service must be 0"));
        }
        if self.tw[DEPOT] != [0, self.horizon] {
            return Err(InstanceError::invalid(
                "tw[0]",
                "depot window must equal [0, horizon]",
            ));
        }
        Ok(())
    }
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<StaticInstance, InstanceError> {
    let text = std::fs::read_to_string(path)?;
    StaticInstance::from_json_str(&text)
}

/// A depot-rooted route; the depot is implied at both ends.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route {
    pub visits: Vec<usize>,
}

impl Route {
    pub fn new(visits: Vec<usize>) -> Self {
        Route { visits }
    }
}

impl From<Vec<usize>> for Route {
    fn from(visits: Vec<usize>) -> Self {
        Route { visits }
    }
}

/// The scalar attributes needed to schedule one visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stop {
    pub location: usize,
    pub demand: i64,
    pub service: Seconds,
    pub tw_open: Seconds,
    pub tw_close: Seconds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTiming {
    pub departure: Seconds,
    pub arrival: Vec<Seconds>,
    pub begin_service: Vec<Seconds>,
    pub return_time: Seconds,
    pub load: i64,
}

/// The first constraint a route breaks, in visiting order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteViolation {
    TimeWindow {
        position: usize,
        arrival: Seconds,
        close: Seconds,
    },
    Capacity {
        position: usize,
        load: i64,
        capacity: i64,
    },
    HorizonReturn {
        return_time: Seconds,
        horizon: Seconds,
    },
}

impl fmt::Display for RouteViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteViolation::TimeWindow {
                position,
                arrival,
                close,
            } => write!(
                f,
                "time window violated at position {position}: arrival {arrival} > close {close}"
            ),
            RouteViolation::Capacity {
                position,
                load,
                capacity,
            } => write!(
                f,
                "capacity exceeded at position {position}: load {load} > {capacity}"
            ),
            RouteViolation::HorizonReturn {
                return_time,
                horizon,
            } => write!(f, "returns at {return_time} after horizon {horizon}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("visit index {index} out of range (instance has {n_rows} rows)")]
    IndexOutOfRange { index: usize, n_rows: usize },
    #[error("route visits the depot at position {position}")]
    DepotVisit { position: usize },
    #[error("infeasible route: {0}")]
    Infeasible(RouteViolation),
}

/// Schedules `stops` in order starting from the depot at `departure`.
///
/// Vehicles wait for a window to open; arriving after it closes, exceeding
/// capacity, or returning after the horizon is reported as the first
/// violation encountered.
pub fn schedule(
    inst: &StaticInstance,
    stops: &[Stop],
    departure: Seconds,
) -> Result<RouteTiming, RouteViolation> {
    let mut arrival = Vec::with_capacity(stops.len());
    let mut begin_service = Vec::with_capacity(stops.len());
    let mut time = departure;
    let mut load = 0;
    let mut prev = DEPOT;
    for (position, stop) in stops.iter().enumerate() {
        time += inst.travel_time(prev, stop.location);
        if time > stop.tw_close {
            return Err(RouteViolation::TimeWindow {
                position,
                arrival: time,
                close: stop.tw_close,
            });
        }
        load += stop.demand;
        if load > inst.capacity {
            return Err(RouteViolation::Capacity {
                position,
                load,
                capacity: inst.capacity,
            });
        }
        arrival.push(time);
        time = time.max(stop.tw_open);
        begin_service.push(time);
        time += stop.service;
        prev = stop.location;
    }
    let return_time = time + inst.travel_time(prev, DEPOT);
    if return_time > inst.horizon {
        return Err(RouteViolation::HorizonReturn {
            return_time,
            horizon: inst.horizon,
        });
    }
    Ok(RouteTiming {
        departure,
        arrival,
        begin_service,
        return_time,
        load,
    })
}

/// Times a route over static rows.
pub fn evaluate_route(
    inst: &StaticInstance,
    route: &Route,
    departure: Seconds,
) -> Result<RouteTiming, RouteError> {
    let n_rows = inst.n_rows();
    let mut stops = Vec::with_capacity(route.visits.len());
    for (position, &index) in route.visits.iter().enumerate() {
        if index >= n_rows {
            return Err(RouteError::IndexOutOfRange { index, n_rows });
        }
        if index == DEPOT {
            return Err(RouteError::DepotVisit { position });
        }
        stops.push(inst.stop(index));
    }
    schedule(inst, &stops, departure).map_err(RouteError::Infeasible)
}

/// Cost of the closed tour depot → `locations` → depot. Empty input costs 0.
pub fn path_cost(inst: &StaticInstance, locations: impl IntoIterator<Item = usize>) -> Cost {
    let mut cost = 0;
    let mut prev = DEPOT;
    let mut any = false;
    for loc in locations {
        cost += inst.cost(prev, loc);
        prev = loc;
        any = true;
    }
    if any {
        cost += inst.cost(prev, DEPOT);
    }
    cost
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("request {index} appears in more than one route")]
pub struct OverlappingRoutes {
    pub index: usize,
}

/// Total cost of a set of pairwise disjoint routes over static rows.
pub fn routing_cost(inst: &StaticInstance, routes: &[Route]) -> Result<Cost, OverlappingRoutes> {
    let mut seen = BTreeSet::new();
    for route in routes {
        for &v in &route.visits {
            if !seen.insert(v) {
                return Err(OverlappingRoutes { index: v });
            }
        }
    }
    Ok(routes
        .iter()
        .map(|r| path_cost(inst, r.visits.iter().copied()))
        .sum())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Depot plus four customers on a line; travel = |x_i - x_j|.
    pub(crate) fn line_instance() -> StaticInstance {
        let xs = [0i64, 10, 20, 30, 40];
        let n = xs.len();
        StaticInstance {
            name: "line".into(),
            capacity: 10,
            horizon: 1000,
            coords: xs.iter().map(|&x| [x, 0]).collect(),
            demand: vec![0, 3, 3, 3, 3],
            service: vec![0, 5, 5, 5, 5],
            tw: vec![[0, 1000], [50, 200], [0, 1000], [0, 40], [0, 1000]],
            travel: (0..n)
                .map(|i| (0..n).map(|j| (xs[i] - xs[j]).abs()).collect())
                .collect(),
        }
    }

    #[test]
    fn minimal_instance_parses() {
        let text = r#"{"name":"one","capacity":5,"horizon":100,"coords":[[0,0],[3,4]],
            "demand":[0,2],"service":[0,1],"tw":[[0,100],[0,90]],"travel":[[0,5],[5,0]]}"#;
        let inst = StaticInstance::from_json_str(text).unwrap();
        assert_eq!(inst.coords.len(), 2);
    }

    #[test]
    fn late_window_names_row() {
        let mut inst = line_instance();
        inst.tw[3] = [0, 1001];
        let err = StaticInstance::from_json_str(&inst.to_json_string()).unwrap_err();
        match err {
            InstanceError::Validation { path, .. } => assert_eq!(path, "tw[3]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            StaticInstance::from_json_str("{\"name\": 3"),
            Err(InstanceError::Parse(_))
        ));
    }

    #[test]
    fn nonzero_diagonal_rejected() {
        let mut inst = line_instance();
        inst.travel[2][2] = 1;
        assert!(matches!(inst.validate(), Err(InstanceError::Validation { path, .. }) if path == "travel[2][2]"));
    }

    #[test]
    fn waiting_until_window_opens() {
        let inst = line_instance();
        let timing = evaluate_route(&inst, &Route::new(vec![1]), 0).unwrap();
        assert_eq!(timing.arrival, vec![10]);
        assert_eq!(timing.begin_service, vec![50]);
        assert_eq!(timing.return_time, 65);
    }

    #[test]
    fn late_arrival_reports_position() {
        let inst = line_instance();
        let err = evaluate_route(&inst, &Route::new(vec![3]), 20).unwrap_err();
        assert_eq!(
            err,
            RouteError::Infeasible(RouteViolation::TimeWindow {
                position: 0,
                arrival: 50,
                close: 40
            })
        );
    }

    #[test]
    fn capacity_and_horizon_violations() {
        let inst = line_instance();
        let err = evaluate_route(&inst, &Route::new(vec![2, 4, 1, 3]), 0).unwrap_err();
        assert!(matches!(
            err,
            RouteError::Infeasible(RouteViolation::TimeWindow { .. } | RouteViolation::Capacity { .. })
        ));
        let err = evaluate_route(&inst, &Route::new(vec![4]), 960).unwrap_err();
        assert!(matches!(err, RouteError::Infeasible(RouteViolation::HorizonReturn { .. })));
        let err = evaluate_route(&inst, &Route::new(vec![9]), 0).unwrap_err();
        assert!(matches!(err, RouteError::IndexOutOfRange { index: 9, .. }));
    }

    #[test]
    fn routing_cost_basics() {
        let inst = line_instance();
        assert_eq!(routing_cost(&inst, &[]).unwrap(), 0);
        assert_eq!(routing_cost(&inst, &[Route::new(vec![2])]).unwrap(), 40);
        let err = routing_cost(&inst, &[Route::new(vec![1, 2]), Route::new(vec![2])]).unwrap_err();
        assert_eq!(err.index, 2);
    }
}
