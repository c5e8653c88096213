use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::context::{Node, SearchContext};
use super::individual::Individual;
use super::local_search::LocalSearch;
use super::operators::{mutate_random_remove_insert, optimize_request_set, srex_crossover};
use super::params::{Budget, HgsParams};
use super::population::Population;
use super::preprocess::preprocess;
use super::{prefer, BudgetMode, Penalties, PcError, PcInstance, PcSolution};
use crate::rng::{rng_from, Rng};

/// Search diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u64,
    /// (iteration, objective) whenever the incumbent improves.
    pub incumbent_trace: Vec<(u64, f64)>,
    pub final_penalties: Option<Penalties>,
    pub feasible_size: usize,
    pub infeasible_size: usize,
    /// Smallest subpopulation sizes observed after initialization.
    pub min_feasible_size: usize,
    pub min_infeasible_size: usize,
}

/// Best feasible solution found by the hybrid genetic search.
pub fn solve(inst: &PcInstance, params: &HgsParams, warm_start: &[PcSolution]) -> Result<PcSolution, PcError> {
    solve_with_stats(inst, params, warm_start).map(|(s, _)| s)
}

struct Search<'a> {
    ctx: SearchContext,
    params: &'a HgsParams,
    rng: Rng,
    best: Individual,
    best_key: (f64, usize, Vec<usize>),
    iterations: u64,
    last_improvement: u64,
    stats: SolveStats,
    cap_feasible: Vec<bool>,
    tw_feasible: Vec<bool>,
}

impl Search<'_> {
    fn local_search(&mut self, ind: &mut Individual) {
        LocalSearch::new(&self.ctx).run(ind, &mut self.rng);
    }

    fn key(ind: &Individual) -> (f64, usize, Vec<usize>) {
        (ind.objective(), ind.routes.len(), ind.served_requests())
    }

    fn improves(&self, ind: &Individual) -> bool {
        let k = Self::key(ind);
        ind.feasible && prefer((k.0, k.1, &k.2), (self.best_key.0, self.best_key.1, &self.best_key.2))
    }

    /// Updates the incumbent; every new incumbent is intensified by an
    /// unperturbed request-set optimization followed by local search.
    fn consider(&mut self, ind: &Individual) {
        if !self.improves(ind) {
            return;
        }
        self.set_best(ind.clone());
        let mut polished = ind.clone();
        if optimize_request_set(&self.ctx, &mut polished, self.params, false, &mut self.rng) {
            self.local_search(&mut polished);
            if self.improves(&polished) {
                self.set_best(polished);
            }
        }
    }

    fn set_best(&mut self, ind: Individual) {
        self.best_key = Self::key(&ind);
        self.best = ind;
        self.last_improvement = self.iterations;
        self.stats.incumbent_trace.push((self.iterations, self.best_key.0));
    }

    fn record_feasibility(&mut self, ind: &Individual) {
        self.cap_feasible.push(ind.load_excess == 0);
        self.tw_feasible.push(ind.time_warp == 0);
    }

    /// Local search with tenfold penalties, applied to half the infeasible
    /// local optima; returns the repaired copy when it became feasible.
    fn maybe_repair(&mut self, ind: &Individual) -> Option<Individual> {
        if ind.feasible || !self.rng.random_bool(0.5) {
            return None;
        }
        let saved = self.ctx.penalties;
        self.ctx.penalties = Penalties {
            capacity: saved.capacity * 10.0,
            time_warp: saved.time_warp * 10.0,
        };
        let mut repaired = ind.clone();
        self.local_search(&mut repaired);
        self.ctx.penalties = saved;
        self.ctx.evaluate(&mut repaired);
        repaired.feasible.then_some(repaired)
    }

    fn adapt_penalties(&mut self, pop: &mut Population) {
        let [lo, hi] = self.params.target_feasible;
        let [min_p, max_p] = self.params.penalty_bounds;
        let adjust = |p: f64, hits: &[bool], params: &HgsParams| -> f64 {
            if hits.is_empty() {
                return p;
            }
            let frac = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
            let next = if frac < lo {
                p * params.penalty_increase
            } else if frac > hi {
                p * params.penalty_decrease
            } else {
                p
            };
            next.clamp(min_p, max_p)
        };
        self.ctx.penalties.capacity = adjust(self.ctx.penalties.capacity, &self.cap_feasible, self.params);
        self.ctx.penalties.time_warp = adjust(self.ctx.penalties.time_warp, &self.tw_feasible, self.params);
        self.cap_feasible.clear();
        self.tw_feasible.clear();
        pop.reevaluate(&self.ctx);
    }

    fn random_individual(&mut self) -> Individual {
        let n = self.ctx.n;
        let mut tour: Vec<Node> = Vec::with_capacity(n);
        for u in 1..=n {
            if self.ctx.forced_in[u] || (self.ctx.servable(u) && self.rng.random_bool(0.5)) {
                tour.push(u);
            }
        }
        tour.shuffle(&mut self.rng);
        let routes = self.ctx.split(&tour);
        self.ctx.individual(routes)
    }

    /// Local search, bookkeeping and insertion of a fresh individual.
    fn settle(&mut self, mut ind: Individual, pop: &mut Population) {
        self.local_search(&mut ind);
        self.record_feasibility(&ind);
        self.consider(&ind);
        if let Some(repaired) = self.maybe_repair(&ind) {
            self.consider(&repaired);
            pop.add(repaired);
        }
        pop.add(ind);
    }
}

/// Like [`solve`], also returning search diagnostics.
pub fn solve_with_stats(inst: &PcInstance, params: &HgsParams, warm_start: &[PcSolution]) -> Result<(PcSolution, SolveStats), PcError> {
    params.validate().map_err(PcError::Invalid)?;
    let additions = preprocess(inst)?;
    let mut work = inst.clone();
    work.forced_in.extend(additions.forced_in);
    work.forced_out.extend(additions.forced_out);
    let ctx = SearchContext::new(&work, params)?;
    let mode = match params.budget {
        Budget::Iterations(_) => BudgetMode::Iterations,
        Budget::Seconds(_) => BudgetMode::WallTime,
    };
    let clock = Instant::now();

    let forced_routes: Vec<Vec<Node>> = (1..=ctx.n).filter(|&u| ctx.forced_in[u]).map(|u| vec![u]).collect();
    let incumbent = ctx.individual(forced_routes);
    debug_assert!(incumbent.feasible);
    let mut search = Search {
        best_key: Search::key(&incumbent),
        best: incumbent,
        ctx,
        params,
        rng: rng_from(params.seed),
        iterations: 0,
        last_improvement: 0,
        stats: SolveStats::default(),
        cap_feasible: Vec::new(),
        tw_feasible: Vec::new(),
    };
    search.stats.incumbent_trace.push((0, search.best_key.0));

    let exhausted = |s: &Search| -> bool {
        let budget_done = match params.budget {
            Budget::Iterations(n) => s.iterations >= n,
            Budget::Seconds(t) => clock.elapsed().as_secs_f64() >= t,
        };
        let stalled = params
            .max_no_improvement
            .is_some_and(|k| s.iterations - s.last_improvement >= k);
        budget_done || stalled
    };

    let any_choice = (1..=search.ctx.n).any(|u| search.ctx.servable(u));
    let mut pop = Population::new(params);
    if any_choice {
        for sol in warm_start {
            let n = search.ctx.n;
            let routes: Vec<Vec<Node>> = sol
                .routes
                .iter()
                .map(|r| r.iter().map(|&i| i + 1).filter(|&u| u <= n && search.ctx.servable(u)).collect())
                .collect();
            let mut ind = search.ctx.individual(routes);
            search.consider(&ind);
            optimize_request_set(&search.ctx, &mut ind, params, false, &mut search.rng);
            search.settle(ind, &mut pop);
        }
        let n_init = 4 * params.population_min;
        for _ in 0..n_init {
            if exhausted(&search) {
                break;
            }
            search.iterations += 1;
            let ind = search.random_individual();
            search.settle(ind, &mut pop);
        }
        search.stats.min_feasible_size = pop.n_feasible();
        search.stats.min_infeasible_size = pop.n_infeasible();
        while !exhausted(&search) {
            search.iterations += 1;
            let child = if pop.len() < 2 {
                search.random_individual()
            } else {
                let a = pop.select_parent(&mut search.rng).expect("non-empty").clone();
                let b = pop.select_parent(&mut search.rng).expect("non-empty").clone();
                srex_crossover(&search.ctx, &a, &b, &mut search.rng)
            };
            let mut child = child;
            mutate_random_remove_insert(&search.ctx, &mut child, params, &mut search.rng);
            search.local_search(&mut child);
            if search.rng.random_bool(params.p_optimize_requests)
                && optimize_request_set(&search.ctx, &mut child, params, true, &mut search.rng)
            {
                search.local_search(&mut child);
            }
            search.record_feasibility(&child);
            search.consider(&child);
            if let Some(repaired) = search.maybe_repair(&child) {
                search.consider(&repaired);
                pop.add(repaired);
            }
            pop.add(child);
            if search.iterations % params.penalty_update_interval.max(1) == 0 {
                search.adapt_penalties(&mut pop);
            }
            search.stats.min_feasible_size = search.stats.min_feasible_size.min(pop.n_feasible());
            search.stats.min_infeasible_size = search.stats.min_infeasible_size.min(pop.n_infeasible());
        }
    }

    let mut stats = search.stats;
    stats.iterations = search.iterations;
    stats.final_penalties = Some(search.ctx.penalties);
    stats.feasible_size = pop.n_feasible();
    stats.infeasible_size = pop.n_infeasible();
    let solution = search.best.to_solution(inst, search.iterations, mode);
    debug_assert!(inst.forced_in.iter().all(|i| solution.served.binary_search(i).is_ok()));
    debug_assert!(solution.served.iter().all(|i| !inst.forced_out.contains(i)));
    Ok((solution, stats))
}
