use super::context::Node;
use super::{BudgetMode, PcSolution, PcInstance};

const NONE: usize = usize::MAX;

/// A candidate solution. Routes hold node indices (request index + 1); the
/// giant tour is their concatenation and omits unserved requests.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub routes: Vec<Vec<Node>>,
    pub giant_tour: Vec<Node>,
    /// Indexed by node; entry 0 (depot) is unused.
    pub served: Vec<bool>,
    pub distance: i64,
    pub prize: f64,
    pub load_excess: i64,
    pub time_warp: i64,
    /// Prize minus distance minus weighted constraint violations.
    pub penalized_objective: f64,
    pub feasible: bool,
    pub objective_rank: usize,
    pub diversity_rank: usize,
    pub(crate) succ: Vec<usize>,
    pub(crate) pred: Vec<usize>,
}

impl Individual {
    pub(crate) fn empty(n: usize) -> Self {
        Individual {
            routes: Vec::new(),
            giant_tour: Vec::new(),
            served: vec![false; n + 1],
            distance: 0,
            prize: 0.0,
            load_excess: 0,
            time_warp: 0,
            penalized_objective: 0.0,
            feasible: true,
            objective_rank: 0,
            diversity_rank: 0,
            succ: vec![NONE; n + 1],
            pred: vec![NONE; n + 1],
        }
    }

    /// Prize minus distance, ignoring penalties.
    pub fn objective(&self) -> f64 {
        self.prize - self.distance as f64
    }

    pub fn n_served(&self) -> usize {
        self.giant_tour.len()
    }

    pub(crate) fn refresh_links(&mut self) {
        self.succ.iter_mut().for_each(|s| *s = NONE);
        self.pred.iter_mut().for_each(|p| *p = NONE);
        for route in &self.routes {
            let mut prev = 0;
            for &u in route {
                self.pred[u] = prev;
                if prev != 0 {
                    self.succ[prev] = u;
                }
                prev = u;
            }
            if prev != 0 {
                self.succ[prev] = 0;
            }
        }
    }

    /// Served request indices in increasing order.
    pub fn served_requests(&self) -> Vec<usize> {
        (1..self.served.len()).filter(|&u| self.served[u]).map(|u| u - 1).collect()
    }

    pub fn to_solution(&self, inst: &PcInstance, iterations: u64, mode: BudgetMode) -> PcSolution {
        let routes = self
            .routes
            .iter()
            .map(|r| r.iter().map(|&u| u - 1).collect())
            .collect();
        PcSolution::from_routes(inst, routes, iterations, mode)
    }
}

/// Broken-pairs distance over requests served by both individuals plus the
/// size of the served-set symmetric difference, normalized by the size of
/// the union of served sets.
pub fn broken_pairs_distance(a: &Individual, b: &Individual) -> f64 {
    let mut differences = 0usize;
    let mut union = 0usize;
    for u in 1..a.served.len() {
        match (a.served[u], b.served[u]) {
            (true, true) => {
                union += 1;
                let (sa, pa) = (a.succ[u], a.pred[u]);
                if sa != b.succ[u] && sa != b.pred[u] {
                    differences += 1;
                }
                if pa == 0 && b.pred[u] != 0 && b.succ[u] != 0 {
                    differences += 1;
                }
            }
            (true, false) | (false, true) => {
                union += 1;
                differences += 1;
            }
            (false, false) => {}
        }
    }
    if union == 0 {
        0.0
    } else {
        differences as f64 / union as f64
    }
}
