use serde::{Deserialize, Serialize};

use crate::instance::{StaticInstance, DEPOT};
use crate::simulator::{DynamicConfig, OpenRequest, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    ModelFree,
    ModelAware,
    Complete,
}

pub const MODEL_FREE_DIM: usize = 11;
pub const TRAVEL_QUANTILES: [f64; 4] = [0.01, 0.05, 0.10, 0.50];
pub const SLACK_QUANTILES: [f64; 5] = [0.0, 0.01, 0.05, 0.10, 0.50];
pub const MODEL_AWARE_DIM: usize = TRAVEL_QUANTILES.len() + SLACK_QUANTILES.len();

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::ModelFree => MODEL_FREE_DIM,
            FeatureSet::ModelAware => MODEL_AWARE_DIM,
            FeatureSet::Complete => MODEL_FREE_DIM + MODEL_AWARE_DIM,
        }
    }
}

/// Feature set plus the standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub set: FeatureSet,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureConfig {
    /// Identity standardization.
    pub fn identity(set: FeatureSet) -> Self {
        FeatureConfig {
            set,
            mean: vec![0.0; set.dim()],
            scale: vec![1.0; set.dim()],
        }
    }

    /// Per-feature mean and standard deviation of `rows`; constant features
    /// keep scale 1.
    pub fn fit(set: FeatureSet, rows: &[Vec<f64>]) -> Self {
        let d = set.dim();
        if rows.is_empty() {
            return FeatureConfig::identity(set);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                var[k] += (r[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        FeatureConfig { set, mean, scale }
    }

    pub fn validate(&self) -> Result<(), String> {
        let d = self.set.dim();
        if self.mean.len() != d || self.scale.len() != d {
            return Err(format!("standardization vectors must have length {d}"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err("standardization scale must be positive and finite".into());
        }
        Ok(())
    }

    pub fn standardize(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *x = (*x - m) / s;
        }
    }
}

/// Element at rank ⌊q·n⌋ (clamped) of the sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k = ((q * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[k]
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn model_free(r: &OpenRequest, state: &SystemState, inst: &StaticInstance, cfg: &DynamicConfig) -> [f64; MODEL_FREE_DIM] {
    let [x, y] = inst.coords[r.location];
    let t_dr = inst.travel_time(DEPOT, r.location) as f64;
    let (l, u, s) = (r.tw_open as f64, r.tw_close as f64, r.service as f64);
    let remaining = (inst.horizon - state.time) as f64;
    let late = state.time + cfg.dispatch_offset + inst.travel_time(DEPOT, r.location) > r.tw_close;
    [
        x as f64,
        y as f64,
        r.demand as f64,
        s,
        l,
        u,
        t_dr,
        ratio(t_dr, u - s),
        ratio(l, remaining),
        ratio(u, remaining),
        late as u8 as f64,
    ]
}

/// Travel-time quantiles to every other static location (depot included)
/// and slack quantiles `u_j − (l_r + s_r + t_{r,j})` over static customers.
pub fn model_aware(r: &OpenRequest, inst: &StaticInstance) -> [f64; MODEL_AWARE_DIM] {
    let mut travel: Vec<f64> = (0..inst.n_rows())
        .filter(|&j| j != r.location)
        .map(|j| inst.travel_time(r.location, j) as f64)
        .collect();
    travel.sort_by(f64::total_cmp);
    let mut slack: Vec<f64> = (1..inst.n_rows())
        .map(|j| (inst.tw[j][1] - (r.tw_open + r.service + inst.travel_time(r.location, j))) as f64)
        .collect();
    slack.sort_by(f64::total_cmp);
    let mut out = [0.0; MODEL_AWARE_DIM];
    for (k, &q) in TRAVEL_QUANTILES.iter().enumerate() {
        out[k] = quantile_sorted(&travel, q);
    }
    for (k, &q) in SLACK_QUANTILES.iter().enumerate() {
        out[TRAVEL_QUANTILES.len() + k] = quantile_sorted(&slack, q);
    }
    out
}

/// Unstandardized feature rows, one per open request in state order.
pub fn raw_features(state: &SystemState, inst: &StaticInstance, cfg: &DynamicConfig, set: FeatureSet) -> Vec<Vec<f64>> {
    state
        .open
        .iter()
        .map(|r| match set {
            FeatureSet::ModelFree => model_free(r, state, inst, cfg).to_vec(),
            FeatureSet::ModelAware => model_aware(r, inst).to_vec(),
            FeatureSet::Complete => {
                let mut v = model_free(r, state, inst, cfg).to_vec();
                v.extend_from_slice(&model_aware(r, inst));
                v
            }
        })
        .collect()
}

/// Standardized feature rows, one per open request in state order.
pub fn extract_features(state: &SystemState, inst: &StaticInstance, cfg: &DynamicConfig, fcfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let mut rows = raw_features(state, inst, cfg, fcfg.set);
    for r in rows.iter_mut() {
        fcfg.standardize(r);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::line_instance;
    use proptest::prelude::*;

    fn request(location: usize, tw: [i64; 2]) -> OpenRequest {
        OpenRequest {
            id: 0,
            location,
            demand: 1,
            service: 0,
            tw_open: tw[0],
            tw_close: tw[1],
            reveal_epoch: 0,
            must_dispatch: false,
        }
    }

    #[test]
    fn late_indicator_boundary() {
        let inst = line_instance();
        let cfg = DynamicConfig {
            epoch_duration: 10,
            dispatch_offset: 5,
            n_epochs: 2,
            ..DynamicConfig::default()
        };
        let state = SystemState { epoch: 0, time: 0, open: vec![] };
        let t = inst.travel_time(DEPOT, 1);
        let on_time = request(1, [0, 5 + t]);
        let late = request(1, [0, 5 + t - 1]);
        assert_eq!(model_free(&on_time, &state, &inst, &cfg)[10], 0.0);
        assert_eq!(model_free(&late, &state, &inst, &cfg)[10], 1.0);
    }

    #[test]
    fn single_location_quantiles_are_that_travel_time() {
        let mut inst = line_instance();
        inst.coords.truncate(2);
        inst.demand.truncate(2);
        inst.service.truncate(2);
        inst.tw.truncate(2);
        inst.travel = vec![vec![0, 7], vec![7, 0]];
        let f = model_aware(&request(1, [0, 100]), &inst);
        assert!(f[..4].iter().all(|&v| v == 7.0));
    }

    #[test]
    fn degenerate_ratios_are_zero() {
        let inst = line_instance();
        let cfg = DynamicConfig::default();
        let state = SystemState { epoch: 0, time: inst.horizon, open: vec![] };
        let mut r = request(1, [0, 0]);
        r.service = 0;
        let f = model_free(&r, &state, &inst, &cfg);
        assert_eq!(f[7], 0.0);
        assert_eq!(f[8], 0.0);
        assert_eq!(f[9], 0.0);
    }

    proptest! {
        #[test]
        fn quantile_matches_rank_definition(v in prop::collection::vec(-1e3f64..1e3, 1..60), q in 0.0f64..=1.0) {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let got = quantile_sorted(&s, q);
            let k = ((q * v.len() as f64) as usize).min(v.len() - 1);
            let below = v.iter().filter(|&&x| x < got).count();
            let at_most = v.iter().filter(|&&x| x <= got).count();
            prop_assert!(below <= k && k < at_most);
        }
    }
}
