//! Flat run configuration. Loaded from JSON, overridden by flags, and written
//! back beside every run's outputs.

use std::path::Path;

use iafmc::evaluator::{DEFAULT_ITEM_COUNT_EDGES, DEFAULT_NS, DEFAULT_USER_LENGTH_EDGES};
use iafmc::{GroupEdges, Mode, Regularization, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub dim: usize,
    pub order: usize,
    pub learning_rate: f64,
    pub reg_assoc: f64,
    pub reg_history: f64,
    pub reg_bias: f64,
    pub reg_order: f64,
    pub reg_self: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub monitor_size: usize,
    /// Adjacency window of the association graph.
    pub window: usize,
    pub ns: Vec<usize>,
    pub user_length_edges: Vec<usize>,
    pub item_count_edges: Vec<usize>,
    pub beta_grid: Vec<f64>,
    pub iteration_grid: Vec<usize>,
    pub order_grid: Vec<usize>,
    /// Independent seeds averaged per sweep point (`seed`, `seed + 1`, ...).
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            mode: Mode::Iafmc,
            dim: 20,
            order: 3,
            learning_rate: train.learning_rate,
            reg_assoc: train.reg.assoc,
            reg_history: train.reg.history,
            reg_bias: train.reg.bias,
            reg_order: train.reg.order,
            reg_self: train.reg.self_weight,
            alpha: train.alpha,
            beta: train.beta,
            epochs: train.epochs,
            seed: train.seed,
            eval_every: train.eval_every,
            monitor_size: train.monitor_size,
            window: 1,
            ns: DEFAULT_NS.to_vec(),
            user_length_edges: DEFAULT_USER_LENGTH_EDGES.to_vec(),
            item_count_edges: DEFAULT_ITEM_COUNT_EDGES.to_vec(),
            beta_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
            iteration_grid: vec![25, 50, 100, 200, 300, 500],
            order_grid: vec![1, 2, 3],
            repeats: 3,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            reg: Regularization {
                assoc: self.reg_assoc,
                history: self.reg_history,
                bias: self.reg_bias,
                order: self.reg_order,
                self_weight: self.reg_self,
            },
            alpha: self.alpha,
            beta: self.beta,
            epochs: self.epochs,
            seed: self.seed,
            eval_every: self.eval_every,
            monitor_size: self.monitor_size,
        }
    }

    pub fn group_edges(&self) -> GroupEdges {
        GroupEdges {
            user_length: self.user_length_edges.clone(),
            item_count: self.item_count_edges.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: &str| Err(CliError::Config(m.to_owned()));
        if self.dim == 0 || self.order == 0 {
            return fail("dim and order must be positive");
        }
        if self.window == 0 {
            return fail("window must be positive");
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return fail("ns must be a non-empty list of positive integers");
        }
        if self.beta_grid.is_empty() || self.iteration_grid.is_empty() || self.order_grid.is_empty() {
            return fail("sweep grids must be non-empty");
        }
        if self.beta_grid.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return fail("beta grid values must lie in [0, 1]");
        }
        if self.iteration_grid.contains(&0) || self.order_grid.contains(&0) {
            return fail("iteration and order grids must be positive");
        }
        if self.repeats == 0 {
            return fail("repeats must be at least 1");
        }
        for edges in [&self.user_length_edges, &self.item_count_edges] {
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return fail("bucket edges must be strictly increasing");
            }
        }
        self.train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_settings() {
        let c = RunConfig::default();
        assert_eq!((c.dim, c.order, c.epochs), (20, 3, 100));
        assert_eq!((c.learning_rate, c.alpha, c.beta), (0.01, 0.2, 0.2));
        assert_eq!(c.beta_grid.len(), 11);
        assert_eq!(c.beta_grid[3], 0.3);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"mode":"fossil","order":2}"#).unwrap();
        assert_eq!(c.mode, Mode::Fossil);
        assert_eq!(c.order, 2);
        assert_eq!(c.dim, 20);
        assert!(serde_json::from_str::<RunConfig>(r#"{"dimm":2}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig {
            beta: 0.35,
            seed: 99,
            ..Default::default()
        };
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }
}
