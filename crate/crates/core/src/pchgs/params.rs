use serde::{Deserialize, Serialize};

/// Search budget. Iteration budgets are reproducible; wall-time budgets are not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Iterations(u64),
    Seconds(f64),
}

impl Budget {
    /// Scales the budget, keeping at least one iteration.
    pub fn scaled(self, factor: f64) -> Budget {
        match self {
            Budget::Iterations(n) => Budget::Iterations(((n as f64 * factor).floor() as u64).max(1)),
            Budget::Seconds(s) => Budget::Seconds(s * factor),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HgsParams {
    /// μ: survivors kept per subpopulation.
    pub population_min: usize,
    /// λ: generation size; a subpopulation is culled when it exceeds μ + λ.
    pub generation_size: usize,
    pub n_elite: usize,
    pub n_closest: usize,
    /// Γ: granular neighbourhood size.
    pub granular: usize,
    pub p_mutation: f64,
    pub removal_factor: f64,
    pub insertion_factor: f64,
    pub p_optimize_requests: f64,
    pub perturbation: [f64; 2],
    /// Initial penalty per unit of excess load; derived from the instance when `None`.
    pub penalty_capacity: Option<f64>,
    pub penalty_time_warp: f64,
    pub penalty_increase: f64,
    pub penalty_decrease: f64,
    pub target_feasible: [f64; 2],
    pub penalty_update_interval: u64,
    pub penalty_bounds: [f64; 2],
    /// Stop once this many consecutive iterations fail to improve the incumbent.
    pub max_no_improvement: Option<u64>,
    pub budget: Budget,
    pub seed: u64,
}

impl Default for HgsParams {
    fn default() -> Self {
        HgsParams {
            population_min: 12,
            generation_size: 20,
            n_elite: 4,
            n_closest: 3,
            granular: 20,
            p_mutation: 0.3,
            removal_factor: 0.1,
            insertion_factor: 0.1,
            p_optimize_requests: 0.25,
            perturbation: [0.8, 1.2],
            penalty_capacity: None,
            penalty_time_warp: 1.0,
            penalty_increase: 1.2,
            penalty_decrease: 0.85,
            target_feasible: [0.2, 0.6],
            penalty_update_interval: 100,
            penalty_bounds: [0.1, 1e5],
            max_no_improvement: None,
            budget: Budget::Iterations(1000),
            seed: 1,
        }
    }
}

impl HgsParams {
    pub fn with_budget(&self, budget: Budget, seed: u64) -> Self {
        HgsParams {
            budget,
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = [
            ("p_mutation", self.p_mutation),
            ("p_optimize_requests", self.p_optimize_requests),
            ("removal_factor", self.removal_factor),
            ("insertion_factor", self.insertion_factor),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        let [lo, hi] = self.perturbation;
        if !(lo > 0.0 && lo <= hi) {
            return Err(format!("perturbation interval [{lo}, {hi}] must satisfy 0 < lo <= hi"));
        }
        if self.granular < 1 {
            return Err("granular neighbourhood size must be at least 1".into());
        }
        if self.population_min < 1 || self.n_closest < 1 {
            return Err("population_min and n_closest must be positive".into());
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s >= 0.0) {
                return Err("wall-time budget must be non-negative".into());
            }
        }
        Ok(())
    }
}
