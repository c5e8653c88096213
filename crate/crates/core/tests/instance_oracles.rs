use dvrptw::generator::{generate_instance, GeneratorConfig};
use dvrptw::instance::{evaluate_route, load_instance, routing_cost, Route, RouteError, RouteViolation, StaticInstance};
use dvrptw::rng::rng_from;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn sample() -> StaticInstance {
    load_instance(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/sample25.json")).unwrap()
}

#[test]
fn bundled_sample_loads_and_regenerates() {
    let inst = sample();
    assert_eq!(inst.n_customers(), 25);
    assert_eq!(inst.travel.len(), 26);
    assert!(inst.travel.iter().all(|row| row.len() == 26));
    inst.validate().unwrap();
    let again = generate_instance(&GeneratorConfig {
        name: "sample25".into(),
        n_customers: 25,
        seed: 25,
        ..GeneratorConfig::default()
    })
    .unwrap();
    assert_eq!(again, inst);
}

/// Straight-line re-simulation of a route, written independently of the library.
fn hand_timing(inst: &StaticInstance, visits: &[usize], departure: i64) -> Result<(Vec<i64>, Vec<i64>, i64), &'static str> {
    let mut clock = departure;
    let mut here = 0;
    let mut load = 0;
    let mut arrivals = vec![];
    let mut starts = vec![];
    for &v in visits {
        clock += inst.travel[here][v];
        arrivals.push(clock);
        if clock > inst.tw[v][1] {
            return Err("window");
        }
        load += inst.demand[v];
        if load > inst.capacity {
            return Err("capacity");
        }
        clock = clock.max(inst.tw[v][0]);
        starts.push(clock);
        clock += inst.service[v];
        here = v;
    }
    clock += inst.travel[here][0];
    if clock > inst.horizon {
        return Err("horizon");
    }
    Ok((arrivals, starts, clock))
}

#[test]
fn four_visit_routes_match_hand_simulation() {
    let inst = sample();
    let mut rng = rng_from(4);
    let mut feasible = 0;
    for k in 0..500 {
        let mut rows: Vec<usize> = (1..=25).collect();
        rows.shuffle(&mut rng);
        let visits = rows[..4].to_vec();
        let departure = 600 * (k % 20);
        let oracle = hand_timing(&inst, &visits, departure);
        match (evaluate_route(&inst, &Route::new(visits.clone()), departure), oracle) {
            (Ok(t), Ok((arr, begin, ret))) => {
                feasible += 1;
                assert_eq!((t.arrival, t.begin_service, t.return_time), (arr, begin, ret));
                assert_eq!(t.load, visits.iter().map(|&v| inst.demand[v]).sum::<i64>());
            }
            (Err(RouteError::Infeasible(v)), Err(kind)) => {
                let got = match v {
                    RouteViolation::TimeWindow { .. } => "window",
                    RouteViolation::Capacity { .. } => "capacity",
                    RouteViolation::HorizonReturn { .. } => "horizon",
                };
                assert_eq!(got, kind, "route {visits:?} at {departure}");
            }
            (got, want) => panic!("route {visits:?} at {departure}: {got:?} vs {want:?}"),
        }
    }
    assert!(feasible > 20, "too few feasible routes to be informative: {feasible}");
}

#[test]
fn two_route_cost_is_arc_sum() {
    let inst = sample();
    let (a, b, c) = (3, 17, 9);
    let arcs = [(0, a), (a, b), (b, 0), (0, c), (c, 0)];
    let expected: i64 = arcs.iter().map(|&(i, j)| inst.travel[i][j]).sum();
    let routes = [Route::new(vec![a, b]), Route::new(vec![c])];
    assert_eq!(routing_cost(&inst, &routes).unwrap(), expected);
}

fn disjoint_routes() -> impl Strategy<Value = Vec<Route>> {
    (Just((1..=25usize).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(1..4usize, 0..6)).prop_map(|(rows, lens)| {
        let mut at = 0;
        lens.into_iter()
            .map(|l| {
                let r = Route::new(rows[at..at + l].to_vec());
                at += l;
                r
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn cost_additive_and_order_free(routes in disjoint_routes(), rot in 0..6usize) {
        let inst = sample();
        let total = routing_cost(&inst, &routes).unwrap();
        let parts: i64 = routes.iter().map(|r| routing_cost(&inst, std::slice::from_ref(r)).unwrap()).sum();
        prop_assert_eq!(total, parts);
        let mut rotated = routes.clone();
        if !rotated.is_empty() {
            let k = rot % rotated.len();
            rotated.rotate_left(k);
        }
        prop_assert_eq!(routing_cost(&inst, &rotated).unwrap(), total);
    }

    #[test]
    fn later_departure_never_starts_service_earlier(routes in disjoint_routes(), dep in 0i64..14_000, delay in 0i64..3_000) {
        let inst = sample();
        for r in &routes {
            if let (Ok(a), Ok(b)) = (evaluate_route(&inst, r, dep), evaluate_route(&inst, r, dep + delay)) {
                prop_assert!(a.begin_service.iter().zip(&b.begin_service).all(|(x, y)| y >= x));
            }
        }
    }
}
