use serde::{Deserialize, Serialize};

use super::individual::Individual;
use super::{HgsParams, PcError, PcInstance};

/// Node index 0 is the depot; request `i` is node `i + 1`.
pub(crate) type Node = usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct RouteEval {
    pub distance: i64,
    pub load: i64,
    pub time_warp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub capacity: f64,
    pub time_warp: f64,
}

/// Where and at what penalized cost a node would be inserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Insertion {
    /// `None` opens a new route.
    pub route: Option<usize>,
    pub position: usize,
    pub delta: f64,
}

/// Node-indexed view of an instance plus the search state shared by all
/// operators: granular neighbourhoods and the current penalty weights.
#[derive(Debug, Clone)]
pub struct SearchContext {
    pub(crate) n: usize,
    pub(crate) travel: Vec<Vec<i64>>,
    pub(crate) demand: Vec<i64>,
    pub(crate) service: Vec<i64>,
    pub(crate) tw_open: Vec<i64>,
    pub(crate) tw_close: Vec<i64>,
    pub(crate) release: Vec<i64>,
    pub(crate) has_releases: bool,
    pub(crate) prize: Vec<f64>,
    pub(crate) forced_in: Vec<bool>,
    /// Forced out by the instance or unreachable on a route of its own.
    pub(crate) forced_out: Vec<bool>,
    pub(crate) angle: Vec<f64>,
    pub(crate) neighbors: Vec<Vec<Node>>,
    pub(crate) capacity: i64,
    pub(crate) horizon: i64,
    pub(crate) departure: i64,
    pub penalties: Penalties,
}

impl SearchContext {
    pub fn new(inst: &PcInstance, params: &HgsParams) -> Result<Self, PcError> {
        inst.validate()?;
        let n = inst.len();
        let mut ctx = SearchContext {
            n,
            travel: inst.travel.clone(),
            demand: std::iter::once(0).chain(inst.requests.iter().map(|r| r.demand)).collect(),
            service: std::iter::once(0).chain(inst.requests.iter().map(|r| r.service)).collect(),
            tw_open: std::iter::once(0).chain(inst.requests.iter().map(|r| r.tw_open)).collect(),
            tw_close: std::iter::once(inst.horizon).chain(inst.requests.iter().map(|r| r.tw_close)).collect(),
            release: std::iter::once(inst.departure).chain(inst.requests.iter().map(|r| r.release)).collect(),
            has_releases: inst.requests.iter().any(|r| r.release > inst.departure),
            prize: std::iter::once(0.0).chain(inst.prizes.iter().copied()).collect(),
            forced_in: vec![false; n + 1],
            forced_out: vec![false; n + 1],
            angle: inst
                .coords
                .iter()
                .map(|c| ((c[1] - inst.coords[0][1]) as f64).atan2((c[0] - inst.coords[0][0]) as f64))
                .collect(),
            neighbors: Vec::new(),
            capacity: inst.capacity,
            horizon: inst.horizon,
            departure: inst.departure,
            penalties: Penalties {
                capacity: 1.0,
                time_warp: params.penalty_time_warp,
            },
        };
        for &i in &inst.forced_in {
            ctx.forced_in[i + 1] = true;
        }
        for &i in &inst.forced_out {
            ctx.forced_out[i + 1] = true;
        }
        let unreachable: Vec<Node> = (1..=n).filter(|&u| !ctx.eval(&[u]).is_feasible_for(&ctx)).collect();
        for u in unreachable {
            if ctx.forced_in[u] {
                return Err(PcError::Infeasible { index: u - 1 });
            }
            ctx.forced_out[u] = true;
        }
        let max_demand = ctx.demand.iter().copied().max().unwrap_or(1).max(1);
        let max_dist = inst.max_cost().max(1);
        ctx.penalties.capacity = params
            .penalty_capacity
            .unwrap_or_else(|| (max_dist as f64 / max_demand as f64).clamp(0.1, 1000.0));
        ctx.neighbors = ctx.granular_neighbors(params.granular);
        Ok(ctx)
    }

    pub fn n_requests(&self) -> usize {
        self.n
    }

    /// Whether request node `u` may appear in a solution.
    #[inline]
    pub(crate) fn servable(&self, u: Node) -> bool {
        !self.forced_out[u]
    }

    fn granular_neighbors(&self, size: usize) -> Vec<Vec<Node>> {
        let proximity = |u: Node, v: Node| -> f64 {
            let t = self.travel[u][v];
            let wait = (self.tw_open[v] - self.service[u] - t - self.tw_close[u]).max(0);
            let late = (self.tw_open[u] + self.service[u] + t - self.tw_close[v]).max(0);
            t as f64 + 0.2 * wait as f64 + late as f64
        };
        let mut out = vec![Vec::new(); self.n + 1];
        for u in 1..=self.n {
            if !self.servable(u) {
                continue;
            }
            let mut cand: Vec<(f64, Node)> = (1..=self.n)
                .filter(|&v| v != u && self.servable(v))
                .map(|v| (proximity(u, v).min(proximity(v, u)), v))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(size);
            out[u] = cand.into_iter().map(|(_, v)| v).collect();
        }
        out
    }

    /// Distance, load and time warp of depot → `nodes` → depot.
    pub(crate) fn eval(&self, nodes: &[Node]) -> RouteEval {
        self.eval_iter(nodes.iter().copied())
    }

    pub(crate) fn eval_iter<I>(&self, nodes: I) -> RouteEval
    where
        I: Iterator<Item = Node> + Clone,
    {
        let mut time = if self.has_releases {
            nodes.clone().map(|u| self.release[u]).fold(self.departure, i64::max)
        } else {
            self.departure
        };
        let mut ev = RouteEval::default();
        let mut prev = 0;
        let mut any = false;
        for u in nodes {
            any = true;
            let t = self.travel[prev][u];
            ev.distance += t;
            time += t;
            if time < self.tw_open[u] {
                time = self.tw_open[u];
            }
            if time > self.tw_close[u] {
                ev.time_warp += time - self.tw_close[u];
                time = self.tw_close[u];
            }
            time += self.service[u];
            ev.load += self.demand[u];
            prev = u;
        }
        if !any {
            return ev;
        }
        ev.distance += self.travel[prev][0];
        time += self.travel[prev][0];
        if time > self.horizon {
            ev.time_warp += time - self.horizon;
        }
        ev
    }

    #[inline]
    pub(crate) fn excess(&self, ev: &RouteEval) -> i64 {
        (ev.load - self.capacity).max(0)
    }

    /// Distance plus weighted capacity excess and time warp.
    #[inline]
    pub(crate) fn penalized(&self, ev: &RouteEval) -> f64 {
        ev.distance as f64
            + self.penalties.capacity * self.excess(ev) as f64
            + self.penalties.time_warp * ev.time_warp as f64
    }

    /// Builds an individual from node routes, dropping empty routes.
    pub fn individual(&self, mut routes: Vec<Vec<Node>>) -> Individual {
        routes.retain(|r| !r.is_empty());
        let mut ind = Individual::empty(self.n);
        ind.routes = routes;
        self.evaluate(&mut ind);
        ind
    }

    /// Recomputes every derived field of `ind` from its routes.
    pub fn evaluate(&self, ind: &mut Individual) {
        ind.routes.retain(|r| !r.is_empty());
        ind.served.iter_mut().for_each(|s| *s = false);
        ind.distance = 0;
        ind.load_excess = 0;
        ind.time_warp = 0;
        ind.prize = 0.0;
        ind.giant_tour.clear();
        for route in &ind.routes {
            let ev = self.eval(route);
            ind.distance += ev.distance;
            ind.load_excess += self.excess(&ev);
            ind.time_warp += ev.time_warp;
            for &u in route {
                ind.served[u] = true;
                ind.prize += self.prize[u];
                ind.giant_tour.push(u);
            }
        }
        ind.refresh_links();
        ind.feasible = ind.load_excess == 0 && ind.time_warp == 0;
        ind.penalized_objective = ind.prize
            - ind.distance as f64
            - self.penalties.capacity * ind.load_excess as f64
            - self.penalties.time_warp * ind.time_warp as f64;
    }

    /// Cheapest insertion of `u` into `routes` or a new route. With
    /// `no_new_violation`, positions that add load excess or time warp to a
    /// route are skipped.
    pub(crate) fn best_insertion(&self, routes: &[Vec<Node>], u: Node, no_new_violation: bool) -> Option<Insertion> {
        let single = self.eval(&[u]);
        let mut best: Option<Insertion> = None;
        if !no_new_violation || single.is_feasible_for(self) {
            best = Some(Insertion {
                route: None,
                position: 0,
                delta: self.penalized(&single),
            });
        }
        for (ri, route) in routes.iter().enumerate() {
            if route.is_empty() {
                continue;
            }
            let old = self.eval(route);
            let old_pen = self.penalized(&old);
            for pos in 0..=route.len() {
                let nodes = route[..pos].iter().copied().chain(std::iter::once(u)).chain(route[pos..].iter().copied());
                let ev = self.eval_iter(nodes);
                if no_new_violation && (self.excess(&ev) > self.excess(&old) || ev.time_warp > old.time_warp) {
                    continue;
                }
                let delta = self.penalized(&ev) - old_pen;
                if best.is_none_or(|b| delta < b.delta - 1e-12) {
                    best = Some(Insertion {
                        route: Some(ri),
                        position: pos,
                        delta,
                    });
                }
            }
        }
        best
    }

    /// Applies an insertion found by [`Self::best_insertion`].
    pub(crate) fn apply_insertion(routes: &mut Vec<Vec<Node>>, u: Node, ins: Insertion) {
        match ins.route {
            Some(r) => routes[r].insert(ins.position, u),
            None => routes.push(vec![u]),
        }
    }

    /// Mean polar angle of a route's nodes around the depot.
    pub(crate) fn route_angle(&self, route: &[Node]) -> f64 {
        let (s, c) = route
            .iter()
            .fold((0.0, 0.0), |(s, c), &u| (s + self.angle[u].sin(), c + self.angle[u].cos()));
        s.atan2(c)
    }
}

impl RouteEval {
    fn is_feasible_for(&self, ctx: &SearchContext) -> bool {
        self.time_warp == 0 && self.load <= ctx.capacity
    }
}
