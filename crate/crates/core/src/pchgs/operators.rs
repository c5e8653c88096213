//! Crossover and request-set mutations.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::context::{Node, SearchContext};
use super::individual::Individual;
use super::HgsParams;
use crate::rng::Rng;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOutcome {
    Skipped,
    Removed(usize),
    Inserted(usize),
}

/// Selective route exchange. A block of consecutive routes (ordered by
/// polar angle) of parent `a` is replaced by a block of `b`; duplicates are
/// removed from either side, giving two candidates. Requests served by `a`
/// (and forced requests) that end up missing are reinserted sequentially at
/// their cheapest penalized position. The better candidate is returned.
pub fn srex_crossover(ctx: &SearchContext, a: &Individual, b: &Individual, rng: &mut Rng) -> Individual {
    let mut routes_a: Vec<Vec<Node>> = a.routes.clone();
    let mut routes_b: Vec<Vec<Node>> = b.routes.clone();
    if routes_b.is_empty() || routes_a.is_empty() {
        let base = if routes_a.is_empty() { routes_b } else { routes_a };
        return complete(ctx, a, base);
    }
    let by_angle = |ctx: &SearchContext, rs: &mut Vec<Vec<Node>>| {
        let mut keyed: Vec<(f64, Vec<Node>)> = rs.drain(..).map(|r| (ctx.route_angle(&r), r)).collect();
        keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        rs.extend(keyed.into_iter().map(|(_, r)| r));
    };
    by_angle(ctx, &mut routes_a);
    by_angle(ctx, &mut routes_b);
    let (na, nb) = (routes_a.len(), routes_b.len());
    let n_move = rng.random_range(1..=na.min(nb));
    let start_a = rng.random_range(0..na);
    let angle_a = ctx.route_angle(&routes_a[start_a]);
    let angular_gap = |x: f64| {
        let d = (x - angle_a).abs() % std::f64::consts::TAU;
        d.min(std::f64::consts::TAU - d)
    };
    let start_b = (0..nb)
        .min_by(|&i, &j| angular_gap(ctx.route_angle(&routes_b[i])).total_cmp(&angular_gap(ctx.route_angle(&routes_b[j]))))
        .unwrap_or(0);

    let mut replaced = vec![false; na];
    for k in 0..n_move {
        replaced[(start_a + k) % na] = true;
    }
    let incoming: Vec<Vec<Node>> = (0..n_move).map(|k| routes_b[(start_b + k) % nb].clone()).collect();
    let kept: Vec<Vec<Node>> = routes_a
        .iter()
        .zip(&replaced)
        .filter(|(_, &r)| !r)
        .map(|(r, _)| r.clone())
        .collect();

    let mut in_incoming = vec![false; ctx.n + 1];
    incoming.iter().flatten().for_each(|&u| in_incoming[u] = true);
    let mut in_kept = vec![false; ctx.n + 1];
    kept.iter().flatten().for_each(|&u| in_kept[u] = true);

    // Variant one keeps incoming routes intact; variant two keeps parent a's routes intact.
    let first: Vec<Vec<Node>> = kept
        .iter()
        .map(|r| r.iter().copied().filter(|&u| !in_incoming[u]).collect())
        .chain(incoming.iter().cloned())
        .collect();
    let second: Vec<Vec<Node>> = kept
        .iter()
        .cloned()
        .chain(incoming.iter().map(|r| r.iter().copied().filter(|&u| !in_kept[u]).collect()))
        .collect();
    let c1 = complete(ctx, a, first);
    let c2 = complete(ctx, a, second);
    if c2.penalized_objective > c1.penalized_objective + EPS {
        c2
    } else {
        c1
    }
}

/// Drops forced-out nodes and reinserts nodes served by `a` (or forced in)
/// that are missing, in the order they appear in `a`'s giant tour.
fn complete(ctx: &SearchContext, a: &Individual, mut routes: Vec<Vec<Node>>) -> Individual {
    for r in routes.iter_mut() {
        r.retain(|&u| ctx.servable(u));
    }
    routes.retain(|r| !r.is_empty());
    let mut present = vec![false; ctx.n + 1];
    routes.iter().flatten().for_each(|&u| present[u] = true);
    let missing_a = a.giant_tour.iter().copied().filter(|&u| ctx.servable(u));
    let missing_forced = (1..=ctx.n).filter(|&u| ctx.forced_in[u]);
    let missing: Vec<Node> = missing_a.chain(missing_forced).collect();
    for u in missing {
        if present[u] {
            continue;
        }
        present[u] = true;
        let ins = ctx.best_insertion(&routes, u, false).expect("unfiltered insertion always exists");
        SearchContext::apply_insertion(&mut routes, u, ins);
    }
    ctx.individual(routes)
}

/// With probability `p_mutation`, flips a fair coin: heads removes
/// ⌊α_rm·|served|⌋ random served, non-forced requests; tails inserts
/// ⌊α_ins·|unserved|⌋ random servable requests at their cheapest positions
/// that add no violation.
pub fn mutate_random_remove_insert(ctx: &SearchContext, ind: &mut Individual, params: &HgsParams, rng: &mut Rng) -> MutationOutcome {
    if !rng.random_bool(params.p_mutation) {
        return MutationOutcome::Skipped;
    }
    if rng.random_bool(0.5) {
        let served = ind.n_served();
        let candidates: Vec<Node> = ind.giant_tour.iter().copied().filter(|&u| !ctx.forced_in[u]).collect();
        let k = ((params.removal_factor * served as f64).floor() as usize).min(candidates.len());
        if k == 0 {
            return MutationOutcome::Removed(0);
        }
        let mut drop = vec![false; ctx.n + 1];
        for &u in candidates.choose_multiple(rng, k) {
            drop[u] = true;
        }
        let routes = ind
            .routes
            .iter()
            .map(|r| r.iter().copied().filter(|&u| !drop[u]).collect())
            .collect();
        *ind = ctx.individual(routes);
        MutationOutcome::Removed(k)
    } else {
        let candidates: Vec<Node> = (1..=ctx.n).filter(|&u| !ind.served[u] && ctx.servable(u)).collect();
        let k = (params.insertion_factor * candidates.len() as f64).floor() as usize;
        if k == 0 {
            return MutationOutcome::Inserted(0);
        }
        let mut chosen: Vec<Node> = candidates.choose_multiple(rng, k).copied().collect();
        chosen.shuffle(rng);
        let mut routes = ind.routes.clone();
        let mut inserted = 0;
        for u in chosen {
            if let Some(ins) = ctx.best_insertion(&routes, u, true) {
                SearchContext::apply_insertion(&mut routes, u, ins);
                inserted += 1;
            }
        }
        *ind = ctx.individual(routes);
        MutationOutcome::Inserted(inserted)
    }
}

/// Removes served requests whose removal saves more than their prize, then
/// inserts unserved requests whose cheapest violation-free detour costs less
/// than their prize. With `perturb`, each saving or detour is scaled by an
/// independent uniform factor from the perturbation interval. Returns
/// whether the request set changed.
pub fn optimize_request_set(ctx: &SearchContext, ind: &mut Individual, params: &HgsParams, perturb: bool, rng: &mut Rng) -> bool {
    let [lo, hi] = params.perturbation;
    let factor = |rng: &mut Rng| if perturb && hi > lo { rng.random_range(lo..=hi) } else if perturb { lo } else { 1.0 };
    let mut routes = ind.routes.clone();
    let mut changed = false;

    let order: Vec<Node> = ind.giant_tour.clone();
    for u in order {
        if ctx.forced_in[u] {
            continue;
        }
        let Some(ri) = routes.iter().position(|r| r.contains(&u)) else {
            continue;
        };
        let before = ctx.penalized(&ctx.eval(&routes[ri]));
        let after = ctx.penalized(&ctx.eval_iter(routes[ri].iter().copied().filter(|&w| w != u)));
        let saving = (before - after) * factor(rng);
        if saving > ctx.prize[u] + EPS {
            routes[ri].retain(|&w| w != u);
            changed = true;
        }
    }
    routes.retain(|r| !r.is_empty());

    let mut served = vec![false; ctx.n + 1];
    routes.iter().flatten().for_each(|&u| served[u] = true);
    for u in 1..=ctx.n {
        if served[u] || !ctx.servable(u) {
            continue;
        }
        let Some(ins) = ctx.best_insertion(&routes, u, true) else {
            continue;
        };
        if ins.delta * factor(rng) < ctx.prize[u] - EPS {
            SearchContext::apply_insertion(&mut routes, u, ins);
            served[u] = true;
            changed = true;
        }
    }
    if changed {
        *ind = ctx.individual(routes);
    }
    changed
}
