//! Independent ground truth for the solvers.
//!
//! Nothing here uses the idle-server recursion: the balance function is
//! evaluated from its definition, stationary sums are truncated explicitly,
//! and the FCFS sequential queue is simulated event by event.

mod balance;
mod simulation;

use serde::{Deserialize, Serialize};

pub use balance::{
    balance_function, sequence_measure_check, truncated_stationary_metrics, BalanceFunction,
    TruncationMetrics, MAX_SEQUENCE_CLASSES, MAX_SEQUENCE_LENGTH, MAX_TRUNCATION_STATES,
};
pub use simulation::{
    simulate_oi_queue, simulate_with, SimConfig, SimulationResult, StateFrequency, T_QUANTILE_29,
};

use crate::model::PoolModel;

/// Jobs per class, indexed by class id minus one.
pub type StateVector = Vec<u32>;

/// A truncated sum, reported as `value ± error_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationEstimate {
    pub value: f64,
    pub error_bound: f64,
    pub truncation_level: usize,
}

impl TruncationEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.error_bound
    }
}

/// A simulated time average with its batch-means confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub events: u64,
    pub seed: u64,
}

impl SimEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width_95
    }
}

/// `M` of the union of the server sets of `classes` (0-based class indices).
pub(crate) fn union_capacity(
    model: &PoolModel,
    classes: impl IntoIterator<Item = usize>,
    scratch: &mut Vec<bool>,
) -> f64 {
    scratch.clear();
    scratch.resize(model.server_count(), false);
    for i in classes {
        for &k in &model.classes()[i].servers {
            scratch[k - 1] = true;
        }
    }
    scratch
        .iter()
        .enumerate()
        .filter(|(_, &used)| used)
        .map(|(k, _)| model.mu(k + 1))
        .sum()
}
