use dvrptw::dataset::{anticipative_baseline_cost, reconstruct_epoch_decisions, solve_offline_with_release, ReleasedRequest};
use dvrptw::generator::{generate_instance, GeneratorConfig};
use dvrptw::instance::StaticInstance;
use dvrptw::pchgs::{Budget, HgsParams};
use dvrptw::policies::{Policy, PolicyKind, PolicySpec};
use dvrptw::simulator::{run_episode, DynamicConfig, OpenRequest, SystemState};

fn hgs(iters: u64) -> HgsParams {
    HgsParams {
        budget: Budget::Iterations(iters),
        ..HgsParams::default()
    }
}

fn instance(seed: u64) -> StaticInstance {
    generate_instance(&GeneratorConfig {
        name: format!("ds{seed}"),
        n_customers: 30,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

/// Every visiting order of a shared route, timed by hand from `departure`.
fn pair_feasible(inst: &StaticInstance, a: &OpenRequest, b: &OpenRequest, departure: i64) -> bool {
    [(a, b), (b, a)].iter().any(|(x, y)| {
        let mut t = departure + inst.travel[0][x.location];
        if t > x.tw_close {
            return false;
        }
        t = t.max(x.tw_open) + x.service + inst.travel[x.location][y.location];
        if t > y.tw_close {
            return false;
        }
        t = t.max(y.tw_open) + y.service + inst.travel[y.location][0];
        x.demand + y.demand <= inst.capacity && t <= inst.horizon
    })
}

#[test]
fn requests_needing_different_epochs_get_separate_routes() {
    let inst = instance(2);
    let cfg = DynamicConfig::default();
    let early = cfg.departure(0);
    let req = |id, location: usize, reveal_epoch, tw_open, tw_close| OpenRequest {
        id,
        location,
        demand: 1,
        service: 300,
        tw_open,
        tw_close,
        reveal_epoch,
        must_dispatch: false,
    };
    // The first closes before the second is even released.
    let a = req(1, 4, 0, 0, early + inst.travel[0][4] + 600);
    let b = req(2, 9, 2, 0, 28_000);
    assert!(!pair_feasible(&inst, &a, &b, cfg.departure(2)));
    let released = vec![ReleasedRequest::new(a, &cfg), ReleasedRequest::new(b, &cfg)];
    let routes = solve_offline_with_release(&released, &inst, &hgs(200)).unwrap();
    assert_eq!(routes.len(), 2);
    let decisions = reconstruct_epoch_decisions(&routes, &released, &cfg).unwrap();
    assert_eq!(decisions.keys().copied().collect::<Vec<_>>(), vec![0, 2]);
}

#[test]
fn baseline_beats_greedy_on_most_scenarios() {
    let cfg = DynamicConfig {
        n_epochs: 3,
        sample_size: 10,
        ..DynamicConfig::default()
    };
    let greedy = Policy::new(
        PolicySpec {
            budget_iters: Some(100),
            ..PolicySpec::new(PolicyKind::Greedy)
        },
        None,
    )
    .unwrap();
    let mut wins = 0;
    for k in 0..50u64 {
        let inst = instance(100 + k % 5);
        let c = cfg.with_seed(k);
        let baseline = anticipative_baseline_cost(&inst, &c, &hgs(500)).unwrap();
        let online = run_episode(&inst, &c, |s: &SystemState| greedy.decide(s, &inst, &c)).unwrap().total_cost;
        wins += (baseline <= online) as usize;
    }
    assert!(wins >= 45, "baseline no worse than greedy in {wins}/50 scenarios");
}
