use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::SimEstimate;
use crate::error::{Error, Result};
use crate::model::PoolModel;

/// 0.975 quantile of Student's t with 29 degrees of freedom.
pub const T_QUANTILE_29: f64 = 2.045;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Total number of events, warmup included.
    pub events: u64,
    pub warmup: u64,
    pub seed: u64,
    pub batches: usize,
    /// Record time spent in every aggregate state with at most this many
    /// jobs; `None` disables state tracking.
    pub track_states_up_to: Option<u32>,
}

impl SimConfig {
    /// Warmup of 10% and 30 batches.
    pub fn new(events: u64, seed: u64) -> Self {
        SimConfig {
            events,
            warmup: events / 10,
            seed,
            batches: 30,
            track_states_up_to: None,
        }
    }
}

/// Time fraction spent in one aggregate state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrequency {
    pub x: Vec<u32>,
    pub probability: f64,
    /// Standard error of `probability`, from the batch means.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    #[serde(rename = "L")]
    pub l_total: SimEstimate,
    #[serde(rename = "L_class")]
    pub l_class: Vec<SimEstimate>,
    pub psi: SimEstimate,
    pub states: Vec<StateFrequency>,
}

/// Time integrals over one batch.
#[derive(Debug, Clone, Default)]
struct Batch {
    time: f64,
    jobs: f64,
    per_class: Vec<f64>,
    empty: f64,
    states: HashMap<Vec<u32>, f64>,
}

/// Simulates the FCFS sequential queue with default batching.
pub fn simulate_oi_queue(
    model: &PoolModel,
    horizon_events: u64,
    warmup_events: u64,
    seed: u64,
) -> Result<SimulationResult> {
    simulate_with(
        model,
        &SimConfig {
            warmup: warmup_events,
            ..SimConfig::new(horizon_events, seed)
        },
    )
}

/// Continuous-time Markov chain on class sequences.
///
/// Class `i` arrives at rate `λ_i` and joins the end of the sequence. The
/// job in position `p` departs at rate `μ(c_1..c_p) − μ(c_1..c_{p−1})`, where
/// `μ(·)` is the capacity of the union of the server sets of the listed
/// classes. Time averages after warmup are split into equal-event batches.
pub fn simulate_with(model: &PoolModel, config: &SimConfig) -> Result<SimulationResult> {
    if model.server_count() > 64 {
        return Err(Error::TooManyServers {
            servers: model.server_count(),
            cap: 64,
        });
    }
    if !model.stability_check(0.0, 64)?.is_stable() {
        return Err(Error::Overloaded(
            "cannot simulate an unstable model".into(),
        ));
    }
    if config.batches < 2 || config.events <= config.warmup + config.batches as u64 {
        return Err(Error::InvalidDescriptor(format!(
            "{} events with warmup {} leave too few for {} batches",
            config.events, config.warmup, config.batches
        )));
    }
    let masks = model.class_masks().expect("at most 64 servers");
    let mu: Vec<f64> = model.servers().iter().map(|s| s.mu).collect();
    let mask_capacity = |m: u64| -> f64 {
        let mut m = m;
        let mut c = 0.0;
        while m != 0 {
            c += mu[m.trailing_zeros() as usize];
            m &= m - 1;
        }
        c
    };
    let lambda: Vec<f64> = model.classes().iter().map(|c| c.lambda).collect();
    let arrival_rate: f64 = lambda.iter().sum();
    let classes = lambda.len();

    let mut rng = Pcg64::seed_from_u64(config.seed);
    let mut sequence: Vec<usize> = Vec::new();
    // prefix_union[p] and prefix_capacity[p] cover positions 0..=p
    let mut prefix_union: Vec<u64> = Vec::new();
    let mut prefix_capacity: Vec<f64> = Vec::new();
    let mut counts = vec![0u32; classes];

    let measured = config.events - config.warmup;
    let per_batch = measured / config.batches as u64;
    let mut batches: Vec<Batch> = Vec::with_capacity(config.batches);
    let mut current = Batch {
        per_class: vec![0.0; classes],
        ..Default::default()
    };

    for event in 0..config.events {
        let total_capacity = prefix_capacity.last().copied().unwrap_or(0.0);
        let rate = arrival_rate + total_capacity;
        let u: f64 = rng.gen();
        let dt = -(1.0 - u).ln() / rate;

        if event >= config.warmup {
            let n = sequence.len() as f64;
            current.time += dt;
            current.jobs += n * dt;
            for (acc, &c) in current.per_class.iter_mut().zip(&counts) {
                *acc += c as f64 * dt;
            }
            if sequence.is_empty() {
                current.empty += dt;
            }
            if let Some(limit) = config.track_states_up_to {
                if sequence.len() as u32 <= limit {
                    *current.states.entry(counts.clone()).or_insert(0.0) += dt;
                }
            }
            let done = event + 1 - config.warmup;
            if done.is_multiple_of(per_batch) && batches.len() < config.batches {
                batches.push(std::mem::replace(
                    &mut current,
                    Batch {
                        per_class: vec![0.0; classes],
                        ..Default::default()
                    },
                ));
            }
        }

        let pick: f64 = rng.gen::<f64>() * rate;
        if pick < arrival_rate {
            let mut acc = 0.0;
            let mut class = classes - 1;
            for (i, &l) in lambda.iter().enumerate() {
                acc += l;
                if pick < acc {
                    class = i;
                    break;
                }
            }
            let union = prefix_union.last().copied().unwrap_or(0) | masks[class];
            sequence.push(class);
            prefix_union.push(union);
            prefix_capacity.push(mask_capacity(union));
            counts[class] += 1;
        } else {
            let target = pick - arrival_rate;
            let p = prefix_capacity
                .partition_point(|&c| c <= target)
                .min(sequence.len() - 1);
            let class = sequence.remove(p);
            counts[class] -= 1;
            prefix_union.truncate(p);
            prefix_capacity.truncate(p);
            for q in p..sequence.len() {
                let union = prefix_union.last().copied().unwrap_or(0) | masks[sequence[q]];
                prefix_union.push(union);
                prefix_capacity.push(mask_capacity(union));
            }
        }
    }

    let estimate = |f: &dyn Fn(&Batch) -> f64| -> SimEstimate {
        let total_time: f64 = batches.iter().map(|b| b.time).sum();
        let mean = batches.iter().map(f).sum::<f64>() / total_time;
        let (mean_b, se) = batch_statistics(batches.iter().map(|b| f(b) / b.time));
        debug_assert!(mean_b.is_finite());
        SimEstimate {
            mean,
            half_width_95: T_QUANTILE_29 * se,
            events: config.events,
            seed: config.seed,
        }
    };
    let l_total = estimate(&|b| b.jobs);
    let l_class = (0..classes)
        .map(|i| estimate(&|b| b.per_class[i]))
        .collect();
    let psi = estimate(&|b| b.empty);

    let mut keys: Vec<Vec<u32>> = batches
        .iter()
        .flat_map(|b| b.states.keys().cloned())
        .collect();
    keys.sort();
    keys.dedup();
    let states = keys
        .into_iter()
        .map(|x| {
            let value = |b: &Batch| b.states.get(&x).copied().unwrap_or(0.0);
            let total_time: f64 = batches.iter().map(|b| b.time).sum();
            let probability = batches.iter().map(value).sum::<f64>() / total_time;
            let (_, std_error) = batch_statistics(batches.iter().map(|b| value(b) / b.time));
            StateFrequency {
                x,
                probability,
                std_error,
            }
        })
        .collect();

    Ok(SimulationResult {
        l_total,
        l_class,
        psi,
        states,
    })
}

/// Mean and standard error of a set of batch means.
fn batch_statistics(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
