use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{union_capacity, TruncationEstimate};
use crate::error::{Error, Result};
use crate::model::PoolModel;

/// Largest number of states a truncated summation may visit.
pub const MAX_TRUNCATION_STATES: f64 = 2.0e7;
/// Sequence enumeration guard: at most this many classes...
pub const MAX_SEQUENCE_CLASSES: usize = 3;
/// ...and sequences of at most this length.
pub const MAX_SEQUENCE_LENGTH: usize = 6;

/// Memoized balance function of a pool.
///
/// `Φ(0) = 1` and `Φ(x) = Σ_{i: x_i > 0} Φ(x − e_i) / M(∪_{i: x_i > 0} K_i)`.
#[derive(Debug, Clone)]
pub struct BalanceFunction<'a> {
    model: &'a PoolModel,
    memo: HashMap<Vec<u32>, f64>,
    scratch: Vec<bool>,
}

impl<'a> BalanceFunction<'a> {
    pub fn new(model: &'a PoolModel) -> Self {
        BalanceFunction {
            model,
            memo: HashMap::new(),
            scratch: Vec::new(),
        }
    }

    /// # Panics
    /// If `x` does not have one entry per class.
    pub fn value(&mut self, x: &[u32]) -> f64 {
        assert_eq!(x.len(), self.model.class_count(), "one entry per class");
        if x.iter().all(|&n| n == 0) {
            return 1.0;
        }
        if let Some(&v) = self.memo.get(x) {
            return v;
        }
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0).collect();
        let capacity = union_capacity(self.model, support.iter().copied(), &mut self.scratch);
        let mut y = x.to_vec();
        let mut sum = 0.0;
        for &i in &support {
            y[i] -= 1;
            sum += self.value(&y);
            y[i] += 1;
        }
        let v = sum / capacity;
        self.memo.insert(x.to_vec(), v);
        v
    }
}

/// `Φ(x)` for a single state. Use [`BalanceFunction`] to share the memo.
pub fn balance_function(model: &PoolModel, x: &[u32]) -> f64 {
    BalanceFunction::new(model).value(x)
}

/// Truncated normalizing sums with tail bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationMetrics {
    pub psi: TruncationEstimate,
    #[serde(rename = "L")]
    pub l_total: TruncationEstimate,
    #[serde(rename = "L_class")]
    pub l_class: Vec<TruncationEstimate>,
    /// Largest ratio of consecutive level sums among the last three levels.
    pub tail_ratio: f64,
}

fn states_up_to(levels: usize, classes: usize) -> f64 {
    // C(levels + classes, classes)
    (1..=classes).fold(1.0, |acc, j| acc * (levels + j) as f64 / j as f64)
}

/// Sums `Φ(x)λ^x` and `x_i Φ(x)λ^x` over all states with `|x| ≤ n_max`.
///
/// The tail beyond `n_max` is bounded by a geometric majorant whose ratio is
/// the largest observed ratio of consecutive level sums over the last three
/// levels. `ψ` is reported as `1/Z` where `Z` is the truncated sum, so the
/// value over-estimates the true `ψ` and the bound covers the gap. Bounds
/// also carry an allowance for accumulated rounding.
pub fn truncated_stationary_metrics(model: &PoolModel, n_max: usize) -> Result<TruncationMetrics> {
    if n_max == 0 {
        return Err(Error::InvalidDescriptor(
            "truncation level must be at least 1".into(),
        ));
    }
    if !model.stability_check(0.0, 63)?.is_stable() {
        return Err(Error::Overloaded(
            "truncated sums diverge for an unstable model".into(),
        ));
    }
    let active: Vec<usize> = (0..model.class_count())
        .filter(|&i| model.classes()[i].lambda > 0.0)
        .collect();
    let states = states_up_to(n_max, active.len());
    if states > MAX_TRUNCATION_STATES || active.len() > 20 {
        return Err(Error::EnumerationTooLarge(format!(
            "{states} states for {} active classes up to level {n_max}",
            active.len()
        )));
    }
    let lambda: Vec<f64> = active.iter().map(|&i| model.classes()[i].lambda).collect();
    let mut scratch = Vec::new();
    let capacity: Vec<f64> = (0..1usize << active.len())
        .map(|s| {
            let members = (0..active.len())
                .filter(|b| s >> b & 1 == 1)
                .map(|b| active[b]);
            union_capacity(model, members, &mut scratch)
        })
        .collect();

    let mut level_sum = vec![1.0];
    let mut first_moment = vec![0.0; active.len()];
    let mut level: HashMap<Vec<u16>, f64> = HashMap::from([(vec![0; active.len()], 1.0)]);
    for _ in 1..=n_max {
        let mut next: HashMap<Vec<u16>, f64> = HashMap::with_capacity(level.len() * 2);
        for (y, &w) in &level {
            for (i, &l) in lambda.iter().enumerate() {
                let mut x = y.clone();
                x[i] += 1;
                *next.entry(x).or_insert(0.0) += l * w;
            }
        }
        let mut sum = 0.0;
        for (x, w) in next.iter_mut() {
            let support = x
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .fold(0, |s, (b, _)| s | 1 << b);
            *w /= capacity[support];
            sum += *w;
            for (i, &n) in x.iter().enumerate() {
                first_moment[i] += n as f64 * *w;
            }
        }
        level_sum.push(sum);
        level = next;
    }

    let mut ratio: f64 = 0.0;
    for n in n_max.saturating_sub(2).max(1)..=n_max {
        if level_sum[n - 1] > 0.0 {
            ratio = ratio.max(level_sum[n] / level_sum[n - 1]);
        }
    }
    if ratio >= 1.0 {
        return Err(Error::TailNotGeometric { ratio });
    }
    let z: f64 = level_sum.iter().sum();
    let last = level_sum[n_max];
    let n = n_max as f64;
    let tail_z = last * ratio / (1.0 - ratio);
    // Σ_{m ≥ 1} (N + m) r^m, a majorant for any first moment
    let tail_moment = last * (n * ratio / (1.0 - ratio) + ratio / (1.0 - ratio).powi(2));
    // each level adds a multiply, an add and a divide to every weight, and the
    // ratio of two sums doubles that
    let rounding = |v: f64| 16.0 * (n + 1.0) * f64::EPSILON * v.abs();

    let psi_value = 1.0 / z;
    let psi = TruncationEstimate {
        value: psi_value,
        // level 0 contributes an exact 1 to the sum
        error_bound: psi_value - 1.0 / (z + tail_z) + rounding(psi_value) * (z - 1.0) / z,
        truncation_level: n_max,
    };
    let moment_estimate = |a: f64| {
        let value = a / z;
        let low = a / (z + tail_z);
        let high = (a + tail_moment) / z;
        TruncationEstimate {
            value,
            error_bound: (value - low).max(high - value) + rounding(value),
            truncation_level: n_max,
        }
    };
    let total: f64 = first_moment.iter().sum();
    let mut l_class = vec![
        TruncationEstimate {
            value: 0.0,
            error_bound: 0.0,
            truncation_level: n_max
        };
        model.class_count()
    ];
    for (b, &i) in active.iter().enumerate() {
        l_class[i] = moment_estimate(first_moment[b]);
    }
    Ok(TruncationMetrics {
        psi,
        l_total: moment_estimate(total),
        l_class,
        tail_ratio: ratio,
    })
}

/// Checks that summing sequence-state weights over all orderings of `x`
/// reproduces `Φ(x)λ^x`, for every `x` with `|x| ≤ n_max`.
///
/// The weight of a sequence `c` is `Π_p λ_{c_p} / M(∪_{q ≤ p} K_{c_q})`.
/// Returns the largest absolute discrepancy.
pub fn sequence_measure_check(model: &PoolModel, n_max: usize) -> Result<f64> {
    let classes = model.class_count();
    if classes > MAX_SEQUENCE_CLASSES || n_max > MAX_SEQUENCE_LENGTH {
        return Err(Error::EnumerationTooLarge(format!(
            "sequence enumeration needs at most {MAX_SEQUENCE_CLASSES} classes and length \
             {MAX_SEQUENCE_LENGTH}, got {classes} classes and length {n_max}"
        )));
    }
    let mut aggregate: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut stack: Vec<(Vec<u32>, Vec<bool>, f64)> =
        vec![(vec![0; classes], vec![false; model.server_count()], 1.0)];
    while let Some((x, used, weight)) = stack.pop() {
        *aggregate.entry(x.clone()).or_insert(0.0) += weight;
        if x.iter().sum::<u32>() as usize == n_max {
            continue;
        }
        for (i, class) in model.classes().iter().enumerate() {
            let mut used = used.clone();
            for &k in &class.servers {
                used[k - 1] = true;
            }
            let capacity: f64 = (0..used.len())
                .filter(|&k| used[k])
                .map(|k| model.mu(k + 1))
                .sum();
            let mut y = x.clone();
            y[i] += 1;
            stack.push((y, used, weight * class.lambda / capacity));
        }
    }
    let mut phi = BalanceFunction::new(model);
    let mut worst: f64 = 0.0;
    for (x, seq) in &aggregate {
        let lambda_pow: f64 = model
            .classes()
            .iter()
            .zip(x)
            .map(|(c, &n)| c.lambda.powi(n as i32))
            .product();
        worst = worst.max((seq - phi.value(x) * lambda_pow).abs());
    }
    Ok(worst)
}
