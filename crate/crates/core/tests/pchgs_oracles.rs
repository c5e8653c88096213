use std::collections::BTreeSet;

use dvrptw::generator::{generate_instance, GeneratorConfig};
use dvrptw::learning::build_prop1_prizes;
use dvrptw::pchgs::{
    brute_force_solve, mutate_random_remove_insert, preprocess, srex_crossover, HgsParams, LocalSearch, MutationOutcome,
    PcInstance, PcRequest, SearchContext,
};
use dvrptw::rng::rng_from;
use dvrptw::simulator::{initial_state, DynamicConfig};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random Euclidean instance with prizes around the depot round trip.
fn instance(n: usize, seed: u64) -> PcInstance {
    let mut rng = rng_from(seed);
    let coords: Vec<[i64; 2]> = (0..=n)
        .map(|i| if i == 0 { [50, 50] } else { [rng.random_range(0..100), rng.random_range(0..100)] })
        .collect();
    let travel: Vec<Vec<i64>> = coords
        .iter()
        .map(|a| coords.iter().map(|b| ((a[0] - b[0]) as f64).hypot((a[1] - b[1]) as f64).round() as i64).collect())
        .collect();
    let requests = (0..n)
        .map(|i| {
            let open = rng.random_range(0..300);
            PcRequest {
                id: i,
                location: i + 1,
                demand: rng.random_range(1..4),
                service: 10,
                tw_open: open,
                tw_close: open + rng.random_range(60..400),
                release: 0,
            }
        })
        .collect();
    let prizes = (0..n).map(|i| rng.random_range(0.0..1.3) * (2 * travel[0][i + 1]) as f64).collect();
    PcInstance {
        requests,
        prizes,
        travel,
        coords,
        capacity: 8,
        horizon: 1000,
        departure: 0,
        forced_in: BTreeSet::new(),
        forced_out: BTreeSet::new(),
    }
}

/// Servable nodes in random order, one route each.
fn singleton_routes(pc: &PcInstance, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut nodes: Vec<usize> = (0..pc.len())
        .filter(|&i| !pc.forced_out.contains(&i) && pc.check_route(&[i]).is_ok() && rng.random_bool(0.7))
        .map(|i| i + 1)
        .collect();
    nodes.shuffle(rng);
    nodes.into_iter().map(|u| vec![u]).collect()
}

#[test]
fn local_search_never_worsens_a_feasible_start() {
    let params = HgsParams::default();
    for seed in 0..200 {
        let pc = instance(5, seed);
        let ctx = SearchContext::new(&pc, &params).unwrap();
        let mut rng = rng_from(seed + 7);
        let mut ind = ctx.individual(singleton_routes(&pc, &mut rng));
        assert!(ind.feasible);
        let before = ind.objective();
        LocalSearch::new(&ctx).run(&mut ind, &mut rng);
        assert!(ind.penalized_objective >= before - 1e-9, "seed {seed}");
        if ind.feasible {
            assert!(ind.objective() >= before - 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn crossover_never_serves_forced_out() {
    let params = HgsParams::default();
    for seed in 0..1000u64 {
        let mut pc = instance(8, seed);
        let mut rng = rng_from(seed ^ 0xC0);
        for i in 0..8 {
            if rng.random_bool(0.25) {
                pc.forced_out.insert(i);
            }
        }
        let ctx = SearchContext::new(&pc, &params).unwrap();
        let a = ctx.individual(singleton_routes(&pc, &mut rng));
        let b = ctx.individual(singleton_routes(&pc, &mut rng));
        let child = srex_crossover(&ctx, &a, &b, &mut rng);
        for &i in &pc.forced_out {
            assert!(!child.served[i + 1], "seed {seed}: forced-out request {i} served");
        }
    }
}

#[test]
fn mutation_coin_is_fair() {
    let params = HgsParams {
        p_mutation: 1.0,
        ..HgsParams::default()
    };
    let pc = instance(8, 3);
    let ctx = SearchContext::new(&pc, &params).unwrap();
    let mut rng = rng_from(99);
    let start = ctx.individual(singleton_routes(&pc, &mut rng));
    let trials = 10_000;
    let mut removals = 0;
    for _ in 0..trials {
        let mut ind = start.clone();
        match mutate_random_remove_insert(&ctx, &mut ind, &params, &mut rng) {
            MutationOutcome::Removed(_) => removals += 1,
            MutationOutcome::Inserted(_) => {}
            MutationOutcome::Skipped => panic!("skipped with p_mutation = 1"),
        }
    }
    let sigma = (trials as f64 * 0.25).sqrt();
    assert!((removals as f64 - trials as f64 / 2.0).abs() <= 3.0 * sigma, "{removals} removals");
}

#[test]
fn target_prizes_force_and_select_exactly_the_target() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let inst = generate_instance(&GeneratorConfig {
            n_customers: 25,
            seed,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let cfg = DynamicConfig {
            sample_size: 12,
            instance_seed: seed,
            ..DynamicConfig::default()
        };
        let mut state = initial_state(&inst, &cfg);
        let n = 3 + (seed as usize % 4);
        if state.open.len() < n {
            continue;
        }
        state.open.truncate(n);
        let mut rng = rng_from(seed);
        // A target that is feasible as singleton routes, must-dispatch included.
        let target: Vec<usize> = state
            .open
            .iter()
            .filter(|r| r.must_dispatch || rng.random_bool(0.5))
            .map(|r| r.id)
            .collect();
        let prizes = build_prop1_prizes(&state, &target, &inst);
        let pc = PcInstance::for_state(&inst, &state, cfg.departure(0), prizes);
        let forced = preprocess(&pc).unwrap();
        for id in &target {
            let i = pc.index_of(*id).unwrap();
            assert!(forced.forced_in.contains(&i) || pc.forced_in.contains(&i), "seed {seed}: {id} not forced in");
        }
        let sol = brute_force_solve(&pc).unwrap();
        let served: Vec<usize> = sol.served.iter().map(|&i| pc.requests[i].id).collect();
        assert_eq!(served, target, "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 40, "only {checked} usable states");
}
