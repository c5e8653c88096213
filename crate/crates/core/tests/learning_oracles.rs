use std::sync::OnceLock;

use dvrptw::dataset::build_dataset;
use dvrptw::generator::{generate_instance, GeneratorConfig};
use dvrptw::instance::StaticInstance;
use dvrptw::learning::{extract_features, train, FeatureSet, ModelKind, PerturbationConfig, PrizeModel, TrainConfig};
use dvrptw::pchgs::{Budget, HgsParams};
use dvrptw::policies::{Policy, PolicyKind, PolicySpec};
use dvrptw::simulator::{initial_state, run_episode, transition, Decision, DynamicConfig, SystemState};

fn hgs(iters: u64) -> HgsParams {
    HgsParams {
        budget: Budget::Iterations(iters),
        ..HgsParams::default()
    }
}

fn setting() -> (StaticInstance, DynamicConfig) {
    let inst = generate_instance(&GeneratorConfig {
        name: "probe".into(),
        n_customers: 40,
        seed: 21,
        tw_width_range: [1800, 3600],
        ..GeneratorConfig::default()
    })
    .unwrap();
    let cfg = DynamicConfig {
        n_epochs: 5,
        sample_size: 15,
        ..DynamicConfig::default()
    };
    (inst, cfg)
}

fn train_small(epochs: usize) -> PrizeModel {
    let (inst, cfg) = setting();
    let data = build_dataset(std::slice::from_ref(&inst), &cfg, 3, &hgs(500), 4).unwrap();
    let pcfg = PerturbationConfig {
        n_samples: 5,
        inner: hgs(30),
        ..PerturbationConfig::default()
    };
    let tcfg = TrainConfig {
        epochs,
        learning_rate: 0.02,
        validation_fraction: 0.0,
        seed: 9,
        ..TrainConfig::default()
    };
    train(&data, std::slice::from_ref(&inst), FeatureSet::Complete, ModelKind::Mlp, &pcfg, &tcfg).unwrap().0
}

fn trained() -> &'static PrizeModel {
    static MODEL: OnceLock<PrizeModel> = OnceLock::new();
    MODEL.get_or_init(|| train_small(15))
}

/// Held-out states reached by dispatching only must-dispatch requests.
fn held_out_states(inst: &StaticInstance, cfg: &DynamicConfig) -> Vec<(SystemState, DynamicConfig)> {
    let mut out = Vec::new();
    for seed in 500..520 {
        let c = cfg.with_seed(seed);
        let mut state = initial_state(inst, &c);
        while state.epoch + 1 < c.n_epochs {
            out.push((state.clone(), c.clone()));
            let forced = state.open.iter().filter(|r| r.must_dispatch).map(|r| dvrptw::instance::Route::new(vec![r.id]));
            let decision = Decision { routes: forced.collect() };
            state = transition(&state, &decision, inst, &c).unwrap();
        }
    }
    out
}

#[test]
fn urgent_requests_get_higher_prizes_than_clearly_postponable_ones() {
    let (inst, cfg) = setting();
    let model = trained();
    let (mut wins, mut pairs) = (0usize, 0usize);
    for (state, c) in held_out_states(&inst, &cfg) {
        let after_next = c.departure(state.epoch + 2);
        let theta = model.predict(&extract_features(&state, &inst, &c, &model.feature_config)).unwrap();
        let urgent: Vec<usize> = (0..state.open.len()).filter(|&i| state.open[i].must_dispatch).collect();
        let relaxed: Vec<usize> = (0..state.open.len()).filter(|&i| state.open[i].tw_open >= after_next).collect();
        for &u in &urgent {
            for &p in &relaxed {
                pairs += 1;
                wins += (theta[u] > theta[p]) as usize;
            }
        }
    }
    assert!(pairs >= 50, "only {pairs} probe pairs");
    let rate = wins as f64 / pairs as f64;
    assert!(rate >= 0.7, "urgent ranked higher in {wins}/{pairs} pairs");
}

#[test]
fn training_is_byte_reproducible() {
    assert_eq!(train_small(2).to_json(), train_small(2).to_json());
}

#[test]
fn larger_budget_does_not_raise_ml_co_cost() {
    let (inst, cfg) = setting();
    let mean_cost = |iters: u64| {
        let spec = PolicySpec {
            budget_iters: Some(iters),
            ..PolicySpec::new(PolicyKind::MlCo)
        };
        let p = Policy::new(spec, Some(trained().clone())).unwrap();
        let total: i64 = (700..710)
            .map(|seed| {
                let c = cfg.with_seed(seed);
                run_episode(&inst, &c, |s: &SystemState| p.decide(s, &inst, &c)).unwrap().total_cost
            })
            .sum();
        total as f64 / 10.0
    };
    let (small, large) = (mean_cost(10), mean_cost(300));
    assert!(large <= small, "300 iterations {large} vs 10 iterations {small}");
}
