//! Random static instance generation.
//!
//! Customers are drawn around a few cluster centres; travel times are
//! rounded Euclidean distances closed under shortest paths so the matrix
//! satisfies the triangle inequality exactly.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::instance::{Seconds, StaticInstance};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub name: String,
    pub n_customers: usize,
    pub seed: u64,
    /// Coordinates lie in `[0, grid_size]²`; one length unit is one second.
    pub grid_size: i64,
    pub n_clusters: usize,
    pub cluster_spread: f64,
    /// Fraction of customers placed uniformly instead of around a cluster.
    pub uniform_fraction: f64,
    pub capacity: i64,
    pub demand_range: [i64; 2],
    pub service_range: [Seconds; 2],
    pub horizon: Seconds,
    pub tw_width_range: [Seconds; 2],
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            name: "generated".into(),
            n_customers: 100,
            seed: 1,
            grid_size: 2000,
            n_clusters: 4,
            cluster_spread: 250.0,
            uniform_fraction: 0.3,
            capacity: 25,
            demand_range: [1, 5],
            service_range: [300, 900],
            horizon: 28_800,
            tw_width_range: [3_600, 10_800],
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid generator config: {0}")]
pub struct GeneratorError(pub String);

pub fn generate_instance(cfg: &GeneratorConfig) -> Result<StaticInstance, GeneratorError> {
    if cfg.n_customers == 0 {
        return Err(GeneratorError("n_customers must be positive".into()));
    }
    if cfg.grid_size <= 0 || cfg.capacity <= 0 || cfg.horizon <= 0 {
        return Err(GeneratorError("grid_size, capacity and horizon must be positive".into()));
    }
    if cfg.demand_range[0] < 0 || cfg.demand_range[0] > cfg.demand_range[1] || cfg.demand_range[1] > cfg.capacity {
        return Err(GeneratorError("demand_range must lie within [0, capacity]".into()));
    }
    if cfg.service_range[0] < 0 || cfg.service_range[0] > cfg.service_range[1] {
        return Err(GeneratorError("service_range is empty".into()));
    }
    if cfg.tw_width_range[0] < 0 || cfg.tw_width_range[0] > cfg.tw_width_range[1] {
        return Err(GeneratorError("tw_width_range is empty".into()));
    }
    let mut rng = rng_from(cfg.seed);
    let g = cfg.grid_size;
    let clamp = |v: f64| (v.round() as i64).clamp(0, g);

    let centres: Vec<[f64; 2]> = (0..cfg.n_clusters.max(1))
        .map(|_| {
            [
                rng.random_range(0.15..0.85) * g as f64,
                rng.random_range(0.15..0.85) * g as f64,
            ]
        })
        .collect();
    let mut coords = vec![[g / 2, g / 2]];
    for _ in 0..cfg.n_customers {
        if cfg.n_clusters == 0 || rng.random_bool(cfg.uniform_fraction.clamp(0.0, 1.0)) {
            coords.push([rng.random_range(0..=g), rng.random_range(0..=g)]);
        } else {
            let c = centres[rng.random_range(0..centres.len())];
            // Box-Muller keeps the generator free of extra distribution types.
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random();
            let r = cfg.cluster_spread * (-2.0 * u1.ln()).sqrt();
            let a = std::f64::consts::TAU * u2;
            coords.push([clamp(c[0] + r * a.cos()), clamp(c[1] + r * a.sin())]);
        }
    }

    let n = coords.len();
    let mut travel: Vec<Vec<Seconds>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dx = (coords[i][0] - coords[j][0]) as f64;
                    let dy = (coords[i][1] - coords[j][1]) as f64;
                    (dx * dx + dy * dy).sqrt().round() as Seconds
                })
                .collect()
        })
        .collect();
    shortest_path_closure(&mut travel);

    let mut demand = vec![0];
    let mut service = vec![0];
    let mut tw = vec![[0, cfg.horizon]];
    for r in 1..n {
        let s = rng.random_range(cfg.service_range[0]..=cfg.service_range[1]);
        let earliest = travel[0][r];
        let latest = cfg.horizon - s - travel[r][0];
        if latest < earliest {
            return Err(GeneratorError(format!(
                "customer {r} cannot be served within the horizon; enlarge horizon or shrink grid"
            )));
        }
        let width = rng.random_range(cfg.tw_width_range[0]..=cfg.tw_width_range[1]);
        let open_hi = (latest - width).max(0);
        let open = if open_hi > 0 { rng.random_range(0..=open_hi) } else { 0 };
        let close = (open + width).min(latest).max(earliest);
        demand.push(rng.random_range(cfg.demand_range[0]..=cfg.demand_range[1]));
        service.push(s);
        tw.push([open.min(close), close]);
    }

    let inst = StaticInstance {
        name: cfg.name.clone(),
        capacity: cfg.capacity,
        horizon: cfg.horizon,
        coords,
        demand,
        service,
        tw,
        travel,
    };
    inst.validate()
        .map_err(|e| GeneratorError(format!("generated instance failed validation: {e}")))?;
    Ok(inst)
}

/// Floyd–Warshall in place.
fn shortest_path_closure(travel: &mut [Vec<Seconds>]) {
    let n = travel.len();
    for k in 0..n {
        for i in 0..n {
            let ik = travel[i][k];
            for j in 0..n {
                let via = ik + travel[k][j];
                if via < travel[i][j] {
                    travel[i][j] = via;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = GeneratorConfig {
            n_customers: 5,
            seed: 42,
            ..Default::default()
        };
        let a = generate_instance(&cfg).unwrap().to_json_string();
        let b = generate_instance(&cfg).unwrap().to_json_string();
        assert_eq!(a, b);
    }

    #[test]
    fn travel_is_metric() {
        let cfg = GeneratorConfig {
            n_customers: 30,
            seed: 3,
            ..Default::default()
        };
        let inst = generate_instance(&cfg).unwrap();
        let n = inst.n_rows();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert!(inst.travel[i][j] <= inst.travel[i][k] + inst.travel[k][j]);
                }
            }
        }
    }

    #[test]
    fn every_customer_feasible_alone() {
        let cfg = GeneratorConfig {
            n_customers: 40,
            seed: 9,
            ..Default::default()
        };
        let inst = generate_instance(&cfg).unwrap();
        for r in 1..inst.n_rows() {
            let route = crate::instance::Route::new(vec![r]);
            crate::instance::evaluate_route(&inst, &route, 0).unwrap();
        }
    }
}
