//! Exact metrics for arbitrary pools by recursive conditioning on idle servers.
//!
//! The empty-system probability of the pool reduced to an active server set
//! `S` satisfies
//!
//! ```text
//! ψ(S) = (M(S) − Λ(S)) / Σ_{k∈S} μ_k / ψ(S∖{k})
//! ```
//!
//! where `Λ(S)` only counts the classes whose servers all lie in `S`, and
//! `ψ(∅) = 1`. Mean job counts follow the same recursion, using the idle
//! probability `ψ(S) / ψ(S∖{k})` of server `k` within `S`.
//!
//! Subsets are memoized by bitmask. Before lookup a subset is shrunk to the
//! union of the server sets of the (positive-rate) classes confined to it:
//! servers that no remaining class can use never change any metric.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ids_of, PoolModel, DEFAULT_MAX_SERVERS, WARN_SERVERS};

/// Limits applied to the subset recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Hard cap on the number of servers (the table has up to `2^K` entries).
    pub max_servers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_servers: DEFAULT_MAX_SERVERS,
        }
    }
}

impl SolverConfig {
    /// Reads the cap override from `BFPOOL_MAX_SERVERS`, if set and valid.
    pub fn from_env() -> Self {
        let max_servers = std::env::var("BFPOOL_MAX_SERVERS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_MAX_SERVERS);
        SolverConfig { max_servers }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MeanEntry {
    total: f64,
    per_class: Vec<f64>,
}

/// Memoized recursion over one pool. Owns its tables; not shared across threads.
#[derive(Debug)]
pub struct GenericSolver<'a> {
    model: &'a PoolModel,
    class_masks: Vec<u64>,
    /// Classes taking part in the recursion (all of them unless some were deleted).
    active: Vec<bool>,
    psi: HashMap<u64, f64>,
    means: HashMap<u64, MeanEntry>,
}

impl<'a> GenericSolver<'a> {
    pub fn new(model: &'a PoolModel, config: SolverConfig) -> Result<Self> {
        let cap = config.max_servers.min(63);
        if model.server_count() > cap {
            return Err(Error::TooManyServers {
                servers: model.server_count(),
                cap,
            });
        }
        let class_masks = model.class_masks().expect("bounded by cap");
        Ok(GenericSolver {
            model,
            class_masks,
            active: vec![true; model.class_count()],
            psi: HashMap::new(),
            means: HashMap::new(),
        })
    }

    /// Solver for the same servers with class `id` deleted.
    pub fn without_class(model: &'a PoolModel, id: usize, config: SolverConfig) -> Result<Self> {
        if model.class(id).is_none() {
            return Err(Error::UnknownClass(id));
        }
        let mut solver = Self::new(model, config)?;
        solver.active[id - 1] = false;
        Ok(solver)
    }

    pub fn full_set(&self) -> u64 {
        let k = self.model.server_count();
        if k == 0 {
            0
        } else {
            u64::MAX >> (64 - k)
        }
    }

    fn confined(&self, subset: u64) -> impl Iterator<Item = usize> + '_ {
        (0..self.class_masks.len())
            .filter(move |&i| self.active[i] && self.class_masks[i] & !subset == 0)
    }

    fn canonical(&self, subset: u64) -> u64 {
        self.confined(subset)
            .filter(|&i| self.model.classes()[i].lambda > 0.0)
            .fold(0, |acc, i| acc | self.class_masks[i])
    }

    /// `(M(S), Λ(S))`, summed in ascending id order.
    fn rates(&self, subset: u64) -> (f64, f64) {
        let m = ids_of(subset).into_iter().map(|k| self.model.mu(k)).sum();
        let l = self
            .confined(subset)
            .map(|i| self.model.classes()[i].lambda)
            .sum();
        (m, l)
    }

    /// Empty-system probability of the pool reduced to the servers in `subset`.
    pub fn psi_of(&mut self, subset: u64) -> Result<f64> {
        let key = self.canonical(subset);
        if key == 0 {
            return Ok(1.0);
        }
        if let Some(&p) = self.psi.get(&key) {
            return Ok(p);
        }
        let (m, l) = self.rates(key);
        if m - l <= 0.0 {
            return Err(Error::UnstableModel {
                witness: ids_of(key),
            });
        }
        let mut denom = 0.0;
        for k in ids_of(key) {
            denom += self.model.mu(k) / self.psi_of(key & !(1u64 << (k - 1)))?;
        }
        let p = (m - l) / denom;
        self.psi.insert(key, p);
        Ok(p)
    }

    fn means_of(&mut self, subset: u64) -> Result<MeanEntry> {
        let key = self.canonical(subset);
        let n = self.class_masks.len();
        if key == 0 {
            return Ok(MeanEntry {
                total: 0.0,
                per_class: vec![0.0; n],
            });
        }
        if let Some(e) = self.means.get(&key) {
            return Ok(e.clone());
        }
        let psi = self.psi_of(key)?;
        let (m, l) = self.rates(key);
        let slack = m - l;
        let mut total = l;
        let mut per_class = vec![0.0; n];
        for i in self.confined(key).collect::<Vec<_>>() {
            per_class[i] = self.model.classes()[i].lambda;
        }
        for k in ids_of(key) {
            let bit = 1u64 << (k - 1);
            let reduced = key & !bit;
            let idle = psi / self.psi_of(reduced)?;
            let weight = self.model.mu(k) * idle;
            let sub = self.means_of(reduced)?;
            total += weight * sub.total;
            // classes using server k vanish from the reduction, so their
            // sub-entries are zero and the sum runs over k ∉ K_i implicitly
            for (acc, s) in per_class.iter_mut().zip(&sub.per_class) {
                *acc += weight * s;
            }
        }
        total /= slack;
        for v in &mut per_class {
            *v /= slack;
        }
        let e = MeanEntry { total, per_class };
        self.means.insert(key, e.clone());
        Ok(e)
    }

    /// `ψ` of the whole pool.
    pub fn empty_probability(&mut self) -> Result<f64> {
        self.psi_of(self.full_set())
    }

    /// `ψ_{|−k}`: the pool without the classes that use server `k`.
    pub fn psi_without_server(&mut self, k: usize) -> Result<f64> {
        if k == 0 || k > self.model.server_count() {
            return Err(Error::UnknownServer(k));
        }
        self.psi_of(self.full_set() & !(1u64 << (k - 1)))
    }

    /// Idle probability `ψ_k = ψ / ψ_{|−k}` of every server, indexed by `id − 1`.
    pub fn server_idle_probabilities(&mut self) -> Result<Vec<f64>> {
        let psi = self.empty_probability()?;
        (1..=self.model.server_count())
            .map(|k| Ok(psi / self.psi_without_server(k)?))
            .collect()
    }

    /// Total and per-class mean numbers of jobs.
    pub fn mean_jobs(&mut self) -> Result<MeanJobs> {
        // ψ table first; the mean recursion then only reads it
        self.empty_probability()?;
        let e = self.means_of(self.full_set())?;
        Ok(MeanJobs {
            total: e.total,
            per_class: e.per_class,
        })
    }

    /// Number of memoized subsets.
    pub fn table_len(&self) -> usize {
        self.psi.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanJobs {
    pub total: f64,
    /// Indexed by class `id − 1`.
    pub per_class: Vec<f64>,
}

pub fn empty_probability(model: &PoolModel) -> Result<f64> {
    GenericSolver::new(model, SolverConfig::default())?.empty_probability()
}

pub fn server_idle_probabilities(model: &PoolModel) -> Result<Vec<f64>> {
    GenericSolver::new(model, SolverConfig::default())?.server_idle_probabilities()
}

pub fn mean_jobs(model: &PoolModel) -> Result<MeanJobs> {
    GenericSolver::new(model, SolverConfig::default())?.mean_jobs()
}

/// Probability that class `id` has no job in the system, `ψ / ψ_{|−i}`.
pub fn class_idle_probability(model: &PoolModel, id: usize) -> Result<f64> {
    class_idle_probability_with(model, id, SolverConfig::default())
}

pub fn class_idle_probability_with(
    model: &PoolModel,
    id: usize,
    config: SolverConfig,
) -> Result<f64> {
    let mut without = GenericSolver::without_class(model, id, config)?;
    let psi = GenericSolver::new(model, config)?.empty_probability()?;
    if model.lambda(id) == 0.0 {
        return Ok(1.0);
    }
    Ok(psi / without.empty_probability()?)
}

/// Load attributed to each class, `λ_i / (M − Λ + λ_i)`.
pub fn class_loads(model: &PoolModel) -> Vec<f64> {
    let (m, l) = model.aggregate_rates();
    model
        .classes()
        .iter()
        .map(|c| c.lambda / (m - (l - c.lambda)))
        .collect()
}

/// Every metric the generic recursion provides. Per-server vectors are
/// indexed by server `id − 1`, per-class vectors by class `id − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psi: f64,
    pub psi_server: Vec<f64>,
    pub psi_class: Vec<f64>,
    #[serde(rename = "L")]
    pub l_total: f64,
    #[serde(rename = "L_class")]
    pub l_class: Vec<f64>,
    /// Mean response times; `None` for classes with zero arrival rate.
    #[serde(rename = "T_class")]
    pub t_class: Vec<Option<f64>>,
    /// Mean service rates `1 / T_i`; `None` for classes with zero arrival rate.
    pub gamma_class: Vec<Option<f64>>,
    pub rho: f64,
    pub rho_class: Vec<f64>,
    pub mean_active_servers: f64,
}

pub fn performance_report(model: &PoolModel) -> Result<MetricsReport> {
    performance_report_with(model, SolverConfig::default())
}

pub fn performance_report_with(model: &PoolModel, config: SolverConfig) -> Result<MetricsReport> {
    let mut solver = GenericSolver::new(model, config)?;
    let psi = solver.empty_probability()?;
    let psi_server = solver.server_idle_probabilities()?;
    let means = solver.mean_jobs()?;
    let psi_class = (1..=model.class_count())
        .map(|i| class_idle_probability_with(model, i, config))
        .collect::<Result<Vec<_>>>()?;
    let (t_class, gamma_class) = model
        .classes()
        .iter()
        .zip(&means.per_class)
        .map(|(c, &l)| {
            if c.lambda > 0.0 {
                let t = l / c.lambda;
                (Some(t), Some(1.0 / t))
            } else {
                (None, None)
            }
        })
        .unzip();
    let mean_active_servers = model.server_count() as f64 - psi_server.iter().sum::<f64>();
    Ok(MetricsReport {
        psi,
        psi_server,
        psi_class,
        l_total: means.total,
        l_class: means.per_class,
        t_class,
        gamma_class,
        rho: model.load(),
        rho_class: class_loads(model),
        mean_active_servers,
    })
}

/// Warning emitted when the subset table may grow large.
pub fn size_warning(model: &PoolModel) -> Option<String> {
    (model.server_count() > WARN_SERVERS).then(|| {
        format!(
            "{} servers: the subset table may hold up to 2^{} entries",
            model.server_count(),
            model.server_count()
        )
    })
}
