//! Exhaustive solver for instances with a handful of requests.
//!
//! Every feasible visiting sequence is enumerated once per candidate
//! departure time, giving the cheapest route for each request subset. A
//! set-partition dynamic program then yields the cheapest route set for
//! each subset, and the best subset is chosen for the given prizes.

use super::{prefer, BudgetMode, PcError, PcInstance, PcSolution};
use crate::instance::Cost;

pub const BRUTE_FORCE_LIMIT: usize = 8;

const INF: Cost = Cost::MAX / 4;

/// Prize-independent tables for one instance; solving for a new prize
/// vector only scans the subsets.
#[derive(Debug, Clone)]
pub struct ExactSolver {
    n: usize,
    forced_in: u32,
    forced_out: u32,
    /// Cheapest single route per subset and its visiting order.
    route_cost: Vec<Cost>,
    route_seq: Vec<Vec<usize>>,
    /// Cheapest partition per subset as (cost, number of routes).
    part: Vec<(Cost, usize)>,
    part_choice: Vec<u32>,
}

impl ExactSolver {
    pub fn new(inst: &PcInstance) -> Result<Self, PcError> {
        inst.validate()?;
        let n = inst.len();
        if n > BRUTE_FORCE_LIMIT {
            return Err(PcError::TooLarge { n, limit: BRUTE_FORCE_LIMIT });
        }
        let full = 1usize << n;
        let mut route_cost = vec![INF; full];
        let mut route_seq = vec![Vec::new(); full];

        let mut departures: Vec<i64> = std::iter::once(inst.departure)
            .chain(inst.requests.iter().map(|r| r.release.max(inst.departure)))
            .collect();
        departures.sort_unstable();
        departures.dedup();
        let dep_of = |mask: usize| -> i64 {
            (0..n)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| inst.requests[i].release)
                .fold(inst.departure, i64::max)
        };
        let mut seq = Vec::with_capacity(n);
        for &d in &departures {
            let allowed: Vec<usize> = (0..n).filter(|&i| inst.requests[i].release <= d).collect();
            enumerate(inst, &allowed, d, &dep_of, &mut seq, 0, d, 0, 0, &mut route_cost, &mut route_seq);
        }

        let mut part = vec![(INF, 0usize); full];
        let mut part_choice = vec![0u32; full];
        part[0] = (0, 0);
        for mask in 1..full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            // submasks of `rest`, each joined with the lowest bit
            let mut sub = rest;
            loop {
                let s = sub | low;
                if route_cost[s] < INF && part[mask ^ s].0 < INF {
                    let cand = (route_cost[s] + part[mask ^ s].0, part[mask ^ s].1 + 1);
                    if cand < part[mask] {
                        part[mask] = cand;
                        part_choice[mask] = s as u32;
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        let bits = |set: &std::collections::BTreeSet<usize>| set.iter().fold(0u32, |m, &i| m | 1 << i);
        Ok(ExactSolver {
            n,
            forced_in: bits(&inst.forced_in),
            forced_out: bits(&inst.forced_out),
            route_cost,
            route_seq,
            part,
            part_choice,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Optimal solution for `prizes`, ties broken by fewer routes and then
    /// the lexicographically smaller served set.
    pub fn solve(&self, prizes: &[f64]) -> Result<PcSolution, PcError> {
        assert_eq!(prizes.len(), self.n, "prize vector length");
        if let Some(i) = prizes.iter().position(|p| !p.is_finite()) {
            return Err(PcError::NonFinitePrize { index: i });
        }
        let mut best: Option<(f64, usize, Vec<usize>, usize)> = None;
        for mask in 0..1usize << self.n {
            let m = mask as u32;
            if m & self.forced_in != self.forced_in || m & self.forced_out != 0 || self.part[mask].0 >= INF {
                continue;
            }
            let served: Vec<usize> = (0..self.n).filter(|&i| mask >> i & 1 == 1).collect();
            let prize: f64 = served.iter().map(|&i| prizes[i]).sum();
            let obj = prize - self.part[mask].0 as f64;
            let better = match &best {
                None => true,
                Some((bo, br, bs, _)) => prefer((obj, self.part[mask].1, &served), (*bo, *br, bs)),
            };
            if better {
                best = Some((obj, self.part[mask].1, served, mask));
            }
        }
        let Some((objective, _, served, mask)) = best else {
            let index = (0..self.n).find(|&i| self.forced_in >> i & 1 == 1).unwrap_or(0);
            return Err(PcError::Infeasible { index });
        };
        let mut routes = Vec::new();
        let mut rest = mask;
        while rest != 0 {
            let s = self.part_choice[rest] as usize;
            routes.push(self.route_seq[s].clone());
            rest ^= s;
        }
        routes.sort();
        let cost = routes.iter().map(|r| self.route_cost[mask_of(r)]).sum();
        Ok(PcSolution {
            routes,
            served,
            objective,
            cost,
            iterations: 0,
            budget_mode: BudgetMode::Exhaustive,
        })
    }
}

fn mask_of(route: &[usize]) -> usize {
    route.iter().fold(0, |m, &i| m | 1 << i)
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    inst: &PcInstance,
    allowed: &[usize],
    departure: i64,
    dep_of: &dyn Fn(usize) -> i64,
    seq: &mut Vec<usize>,
    mask: usize,
    time: i64,
    load: i64,
    cost: Cost,
    route_cost: &mut [Cost],
    route_seq: &mut [Vec<usize>],
) {
    let last = seq.last().copied();
    if let Some(l) = last {
        let back = inst.cost(Some(l), None);
        if time + back <= inst.horizon && dep_of(mask) == departure {
            let total = cost + back;
            if total < route_cost[mask] {
                route_cost[mask] = total;
                route_seq[mask] = seq.clone();
            }
        }
    }
    for &i in allowed {
        if mask >> i & 1 == 1 {
            continue;
        }
        let r = &inst.requests[i];
        let arc = inst.cost(last, Some(i));
        let arrival = time + arc;
        if arrival > r.tw_close || load + r.demand > inst.capacity {
            continue;
        }
        seq.push(i);
        let next = arrival.max(r.tw_open) + r.service;
        enumerate(inst, allowed, departure, dep_of, seq, mask | 1 << i, next, load + r.demand, cost + arc, route_cost, route_seq);
        seq.pop();
    }
}

/// Exact optimum of a small instance.
pub fn brute_force_solve(inst: &PcInstance) -> Result<PcSolution, PcError> {
    ExactSolver::new(inst)?.solve(&inst.prizes)
}
