use rand::Rng as _;

use super::context::SearchContext;
use super::individual::{broken_pairs_distance, Individual};
use super::HgsParams;
use crate::rng::Rng;

#[derive(Debug, Clone, Default)]
struct SubPopulation {
    members: Vec<Individual>,
    /// Symmetric pairwise distances between members.
    dist: Vec<Vec<f64>>,
    /// Biased fitness; lower is better.
    fitness: Vec<f64>,
}

impl SubPopulation {
    fn push(&mut self, ind: Individual) {
        let row: Vec<f64> = self.members.iter().map(|m| broken_pairs_distance(&ind, m)).collect();
        for (d, &x) in self.dist.iter_mut().zip(&row) {
            d.push(x);
        }
        let mut row = row;
        row.push(0.0);
        self.dist.push(row);
        self.members.push(ind);
    }

    fn remove(&mut self, i: usize) -> Individual {
        self.dist.remove(i);
        for d in self.dist.iter_mut() {
            d.remove(i);
        }
        self.fitness.clear();
        self.members.remove(i)
    }

    fn best_index(&self) -> Option<usize> {
        (0..self.members.len()).max_by(|&i, &j| {
            self.members[i]
                .penalized_objective
                .total_cmp(&self.members[j].penalized_objective)
                .then(j.cmp(&i))
        })
    }

    /// Ranks by objective (descending) and by mean distance to the
    /// `n_closest` nearest members (descending), then blends the ranks.
    fn update_fitness(&mut self, n_closest: usize, n_elite: usize) {
        let n = self.members.len();
        self.fitness = vec![0.0; n];
        if n <= 1 {
            for m in self.members.iter_mut() {
                m.objective_rank = 0;
                m.diversity_rank = 0;
            }
            return;
        }
        let diversity: Vec<f64> = (0..n)
            .map(|i| {
                let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| self.dist[i][j]).collect();
                d.sort_by(f64::total_cmp);
                let k = n_closest.min(d.len());
                d[..k].iter().sum::<f64>() / k as f64
            })
            .collect();
        let mut by_obj: Vec<usize> = (0..n).collect();
        by_obj.sort_by(|&i, &j| {
            self.members[j]
                .penalized_objective
                .total_cmp(&self.members[i].penalized_objective)
                .then(i.cmp(&j))
        });
        let mut by_div: Vec<usize> = (0..n).collect();
        by_div.sort_by(|&i, &j| diversity[j].total_cmp(&diversity[i]).then(i.cmp(&j)));
        for (rank, &i) in by_obj.iter().enumerate() {
            self.members[i].objective_rank = rank;
        }
        for (rank, &i) in by_div.iter().enumerate() {
            self.members[i].diversity_rank = rank;
        }
        let weight = 1.0 - (n_elite as f64 / n as f64).min(1.0);
        let scale = (n - 1) as f64;
        for i in 0..n {
            let m = &self.members[i];
            self.fitness[i] = m.objective_rank as f64 / scale + weight * m.diversity_rank as f64 / scale;
        }
    }

    /// Index of the member to evict: the worst-fitness clone if any member
    /// has a clone, else the worst-fitness member; never the best member.
    fn eviction_candidate(&self) -> Option<usize> {
        let n = self.members.len();
        let best = self.best_index()?;
        let has_clone = |i: usize| (0..n).any(|j| j != i && self.dist[i][j] == 0.0 && self.members[i].routes == self.members[j].routes);
        let worst = |pool: &mut dyn Iterator<Item = usize>| {
            pool.max_by(|&i, &j| self.fitness[i].total_cmp(&self.fitness[j]).then(i.cmp(&j)))
        };
        worst(&mut (0..n).filter(|&i| i != best && has_clone(i))).or_else(|| worst(&mut (0..n).filter(|&i| i != best)))
    }
}

/// Feasible and infeasible subpopulations with diversity-aware biased fitness.
#[derive(Debug, Clone)]
pub struct Population {
    feasible: SubPopulation,
    infeasible: SubPopulation,
    mu: usize,
    lambda: usize,
    n_closest: usize,
    n_elite: usize,
}

impl Population {
    pub fn new(params: &HgsParams) -> Self {
        Population {
            feasible: SubPopulation::default(),
            infeasible: SubPopulation::default(),
            mu: params.population_min,
            lambda: params.generation_size,
            n_closest: params.n_closest,
            n_elite: params.n_elite,
        }
    }

    fn sub_mut(&mut self, feasible: bool) -> &mut SubPopulation {
        if feasible {
            &mut self.feasible
        } else {
            &mut self.infeasible
        }
    }

    /// Adds `ind`, culling its subpopulation down to μ once it exceeds μ + λ.
    pub fn add(&mut self, ind: Individual) {
        let feasible = ind.feasible;
        let (mu, lambda, nc, ne) = (self.mu, self.lambda, self.n_closest, self.n_elite);
        let sub = self.sub_mut(feasible);
        sub.push(ind);
        if sub.members.len() > mu + lambda {
            while sub.members.len() > mu {
                sub.update_fitness(nc, ne);
                let Some(i) = sub.eviction_candidate() else { break };
                sub.remove(i);
            }
        }
        sub.update_fitness(nc, ne);
    }

    /// Removes and returns the next eviction candidate of one subpopulation.
    pub fn evict_one(&mut self, feasible: bool) -> Option<Individual> {
        let (nc, ne) = (self.n_closest, self.n_elite);
        let sub = self.sub_mut(feasible);
        sub.update_fitness(nc, ne);
        let i = sub.eviction_candidate()?;
        let out = sub.remove(i);
        sub.update_fitness(nc, ne);
        Some(out)
    }

    pub fn len(&self) -> usize {
        self.feasible.members.len() + self.infeasible.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_feasible(&self) -> usize {
        self.feasible.members.len()
    }

    pub fn n_infeasible(&self) -> usize {
        self.infeasible.members.len()
    }

    pub fn max_size(&self) -> usize {
        self.mu + self.lambda
    }

    pub fn members(&self) -> impl Iterator<Item = &Individual> {
        self.feasible.members.iter().chain(self.infeasible.members.iter())
    }

    pub fn best_feasible(&self) -> Option<&Individual> {
        self.feasible.best_index().map(|i| &self.feasible.members[i])
    }

    /// Binary tournament over the union of both subpopulations.
    pub fn select_parent(&self, rng: &mut Rng) -> Option<&Individual> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let pick = |i: usize| -> (&Individual, f64) {
            let nf = self.feasible.members.len();
            if i < nf {
                (&self.feasible.members[i], self.feasible.fitness[i])
            } else {
                (&self.infeasible.members[i - nf], self.infeasible.fitness[i - nf])
            }
        };
        let a = pick(rng.random_range(0..n));
        let b = pick(rng.random_range(0..n));
        Some(if b.1 < a.1 { b.0 } else { a.0 })
    }

    /// Re-evaluates members after a penalty change and refreshes fitness.
    pub fn reevaluate(&mut self, ctx: &SearchContext) {
        let (nc, ne) = (self.n_closest, self.n_elite);
        for sub in [&mut self.feasible, &mut self.infeasible] {
            for m in sub.members.iter_mut() {
                ctx.evaluate(m);
            }
            sub.update_fitness(nc, ne);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::random_instance;
    use super::*;
    use crate::rng::rng_from;
    use rand::seq::SliceRandom;

    fn random_individual(ctx: &SearchContext, rng: &mut Rng) -> Individual {
        let mut tour: Vec<usize> = (1..=ctx.n).filter(|&u| ctx.servable(u) && rng.random_bool(0.7)).collect();
        tour.shuffle(rng);
        let routes = ctx.split(&tour);
        ctx.individual(routes)
    }

    #[test]
    fn size_bounded_and_best_kept() {
        let inst = random_instance(8, 1);
        let params = HgsParams {
            population_min: 4,
            generation_size: 6,
            ..HgsParams::default()
        };
        let ctx = SearchContext::new(&inst, &params).unwrap();
        let mut pop = Population::new(&params);
        let mut rng = rng_from(7);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..200 {
            let ind = random_individual(&ctx, &mut rng);
            if ind.feasible {
                best = best.max(ind.penalized_objective);
            }
            pop.add(ind);
            assert!(pop.n_feasible() <= 10 && pop.n_infeasible() <= 10);
            if let Some(b) = pop.best_feasible() {
                assert_eq!(b.penalized_objective, best);
            }
        }
    }

    #[test]
    fn clone_evicted_first() {
        let inst = random_instance(8, 2);
        let params = HgsParams::default();
        let ctx = SearchContext::new(&inst, &params).unwrap();
        let mut pop = Population::new(&params);
        let mut rng = rng_from(3);
        let mut members = Vec::new();
        while members.len() < 6 {
            let ind = random_individual(&ctx, &mut rng);
            if ind.feasible && !members.iter().any(|m: &Individual| m.routes == ind.routes) {
                members.push(ind.clone());
                pop.add(ind);
            }
        }
        let worst = members
            .iter()
            .min_by(|a, b| a.penalized_objective.total_cmp(&b.penalized_objective))
            .unwrap()
            .clone();
        pop.add(worst.clone());
        let evicted = pop.evict_one(true).unwrap();
        assert_eq!(evicted.routes, worst.routes);
    }
}
