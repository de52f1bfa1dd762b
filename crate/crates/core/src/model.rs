//! Class–server assignment graphs with rates.
//!
//! A [`PoolModel`] is a bipartite graph between job classes and servers.
//! Class `i` arrives at rate `lambda` and may be served by the servers in its
//! server set; server `k` works at rate `mu`. Ids are 1-based and contiguous
//! on both sides.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of servers for which subsets are enumerated by default.
pub const DEFAULT_MAX_SERVERS: usize = 30;

/// Above this many servers the subset enumeration is slow enough to warn about.
pub const WARN_SERVERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub id: usize,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub id: usize,
    pub lambda: f64,
    pub servers: Vec<usize>,
}

/// Unvalidated model description, as read from a model document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub servers: Vec<ServerSpec>,
    pub classes: Vec<ClassSpec>,
}

impl RawModel {
    /// Convenience constructor from rate vectors and 1-based server sets.
    pub fn from_rates(mu: &[f64], classes: &[(f64, Vec<usize>)]) -> Self {
        RawModel {
            servers: mu
                .iter()
                .enumerate()
                .map(|(k, &mu)| ServerSpec { id: k + 1, mu })
                .collect(),
            classes: classes
                .iter()
                .enumerate()
                .map(|(i, (lambda, servers))| ClassSpec {
                    id: i + 1,
                    lambda: *lambda,
                    servers: servers.clone(),
                })
                .collect(),
        }
    }
}

/// A validated pool. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolModel {
    servers: Vec<ServerSpec>,
    classes: Vec<ClassSpec>,
    classes_of_server: Vec<BTreeSet<usize>>,
    warnings: Vec<String>,
}

impl PoolModel {
    /// Validates a raw description.
    ///
    /// Server sets are sorted and deduplicated. Servers that no class
    /// references are pruned (the remaining servers are renumbered in order)
    /// and a warning is recorded.
    pub fn validate(raw: &RawModel) -> Result<PoolModel> {
        check_ids(raw.servers.iter().map(|s| s.id), "server")?;
        check_ids(raw.classes.iter().map(|c| c.id), "class")?;

        let mut servers = raw.servers.clone();
        servers.sort_by_key(|s| s.id);
        for s in &servers {
            if !(s.mu.is_finite() && s.mu > 0.0) {
                return Err(Error::NonPositiveServiceRate {
                    server: s.id,
                    mu: s.mu,
                });
            }
        }
        let k_count = servers.len();

        let mut classes = raw.classes.clone();
        classes.sort_by_key(|c| c.id);
        for c in &mut classes {
            if !(c.lambda.is_finite() && c.lambda >= 0.0) {
                return Err(Error::NegativeArrivalRate {
                    class: c.id,
                    lambda: c.lambda,
                });
            }
            if c.servers.is_empty() {
                return Err(Error::EmptyServerSet { class: c.id });
            }
            if let Some(&bad) = c.servers.iter().find(|&&k| k == 0 || k > k_count) {
                return Err(Error::UnknownServerReference {
                    class: c.id,
                    server: bad,
                });
            }
            c.servers.sort_unstable();
            c.servers.dedup();
        }

        let mut used = vec![false; k_count];
        for c in &classes {
            for &k in &c.servers {
                used[k - 1] = true;
            }
        }
        let mut warnings = Vec::new();
        if used.iter().any(|u| !u) {
            let mut renumber = vec![0; k_count];
            let mut kept = Vec::new();
            for (idx, s) in servers.iter().enumerate() {
                if used[idx] {
                    kept.push(ServerSpec {
                        id: kept.len() + 1,
                        mu: s.mu,
                    });
                    renumber[idx] = kept.len();
                } else {
                    warnings.push(format!(
                        "server {} is assigned no class and was pruned",
                        s.id
                    ));
                }
            }
            for c in &mut classes {
                for k in &mut c.servers {
                    *k = renumber[*k - 1];
                }
            }
            servers = kept;
        }

        let mut classes_of_server = vec![BTreeSet::new(); servers.len()];
        for c in &classes {
            for &k in &c.servers {
                classes_of_server[k - 1].insert(c.id);
            }
        }
        Ok(PoolModel {
            servers,
            classes,
            classes_of_server,
            warnings,
        })
    }

    pub fn server_count(&self) -> usize {
        self.servers.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn servers(&self) -> &[ServerSpec] {
        &self.servers
    }

    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    /// Service rate of server `id`.
    pub fn mu(&self, id: usize) -> f64 {
        self.servers[id - 1].mu
    }

    /// Arrival rate of class `id`.
    pub fn lambda(&self, id: usize) -> f64 {
        self.classes[id - 1].lambda
    }

    pub fn class(&self, id: usize) -> Option<&ClassSpec> {
        id.checked_sub(1).and_then(|i| self.classes.get(i))
    }

    /// Classes that may be served by server `id`.
    pub fn classes_of_server(&self, id: usize) -> &BTreeSet<usize> {
        &self.classes_of_server[id - 1]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn to_raw(&self) -> RawModel {
        RawModel {
            servers: self.servers.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Same graph with every arrival rate multiplied by `factor`.
    pub fn scaled_arrivals(&self, factor: f64) -> PoolModel {
        let mut m = self.clone();
        for c in &mut m.classes {
            c.lambda *= factor;
        }
        m
    }

    /// Total service rate `M` and total arrival rate `Λ` of the whole pool.
    pub fn aggregate_rates(&self) -> (f64, f64) {
        (
            self.servers.iter().map(|s| s.mu).sum(),
            self.classes.iter().map(|c| c.lambda).sum(),
        )
    }

    /// Overall load `Λ / M`.
    pub fn load(&self) -> f64 {
        let (m, l) = self.aggregate_rates();
        if m > 0.0 {
            l / m
        } else {
            0.0
        }
    }

    /// Server sets as bitmasks (bit `k - 1` for server `k`); `None` above 64 servers.
    pub fn class_masks(&self) -> Option<Vec<u64>> {
        if self.servers.len() > 64 {
            return None;
        }
        Some(self.classes.iter().map(|c| mask_of(&c.servers)).collect())
    }

    /// The system restricted to jobs that do not use server `k`.
    pub fn remove_server(&self, k: usize) -> Result<ReducedPool<'_>> {
        if k == 0 || k > self.servers.len() {
            return Err(Error::UnknownServer(k));
        }
        let kept = (1..=self.servers.len()).filter(|&s| s != k).collect();
        Ok(self.reduce(kept))
    }

    /// The system reduced to the servers in `servers` and the classes confined to them.
    pub fn restrict_to_servers(&self, servers: &BTreeSet<usize>) -> Result<ReducedPool<'_>> {
        if let Some(&bad) = servers.iter().find(|&&k| k == 0 || k > self.servers.len()) {
            return Err(Error::UnknownServer(bad));
        }
        Ok(self.reduce(servers.clone()))
    }

    fn reduce(&self, kept_servers: BTreeSet<usize>) -> ReducedPool<'_> {
        let kept_classes = self
            .classes
            .iter()
            .filter(|c| c.servers.iter().all(|k| kept_servers.contains(k)))
            .map(|c| c.id)
            .collect();
        ReducedPool {
            base: self,
            kept_servers,
            kept_classes,
        }
    }

    /// Decides the stability condition by enumerating every nonempty server
    /// subset `L`: the classes confined to `L` must arrive strictly slower
    /// than `M(L) - eps * M(K)`.
    ///
    /// Subsets are visited by increasing size, then by increasing bitmask, so
    /// the reported witness is the first violating subset in that order.
    pub fn stability_check(&self, eps: f64, max_servers: usize) -> Result<Stability> {
        let k_count = self.servers.len();
        let cap = max_servers.min(63);
        if k_count > cap {
            return Err(Error::TooManyServers {
                servers: k_count,
                cap,
            });
        }
        let masks = self.class_masks().expect("bounded by cap");
        let margin = eps * self.aggregate_rates().0;
        for size in 1..=k_count {
            for subset in SubsetsOfSize::new(k_count, size) {
                let (m, l) = self.subset_rates(&masks, subset);
                if l >= m - margin {
                    return Ok(Stability::Unstable {
                        witness: ids_of(subset),
                    });
                }
            }
        }
        Ok(Stability::Stable)
    }

    /// `M(L)` and `Λ` of the classes confined to `L`, for a server bitmask `L`.
    ///
    /// Both sums run in ascending id order so that every caller sees bitwise
    /// identical values for the same subset.
    pub(crate) fn subset_rates(&self, class_masks: &[u64], subset: u64) -> (f64, f64) {
        let m = ids_of(subset)
            .into_iter()
            .map(|k| self.servers[k - 1].mu)
            .sum();
        let l = self
            .classes
            .iter()
            .zip(class_masks)
            .filter(|(_, &cm)| cm & !subset == 0)
            .map(|(c, _)| c.lambda)
            .sum();
        (m, l)
    }
}

fn check_ids(ids: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    let mut ids: Vec<usize> = ids.collect();
    ids.sort_unstable();
    for (pos, &id) in ids.iter().enumerate() {
        if id != pos + 1 {
            return Err(Error::InvalidIds(format!("{what} ids {ids:?}")));
        }
    }
    Ok(())
}

/// Bitmask with bit `k - 1` set for every 1-based id `k`.
pub fn mask_of(ids: &[usize]) -> u64 {
    ids.iter().fold(0u64, |acc, &k| acc | (1u64 << (k - 1)))
}

/// 1-based ids of the bits set in `mask`, ascending.
pub fn ids_of(mask: u64) -> Vec<usize> {
    (0..64)
        .filter(|b| mask >> b & 1 == 1)
        .map(|b| b + 1)
        .collect()
}

/// Subsets of `{0..n}` with exactly `size` elements, in increasing bitmask order.
pub(crate) struct SubsetsOfSize {
    next: Option<u64>,
    limit: u64,
}

impl SubsetsOfSize {
    pub(crate) fn new(n: usize, size: usize) -> Self {
        assert!(n < 64 && size <= n);
        let next = if size == 0 {
            Some(0)
        } else {
            Some((1u64 << size) - 1)
        };
        SubsetsOfSize {
            next,
            limit: 1u64 << n,
        }
    }
}

impl Iterator for SubsetsOfSize {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let cur = self.next?;
        if cur >= self.limit {
            self.next = None;
            return None;
        }
        // Gosper's hack
        self.next = if cur == 0 {
            None
        } else {
            let c = cur & cur.wrapping_neg();
            let r = cur + c;
            Some((((r ^ cur) >> 2) / c) | r)
        };
        Some(cur)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable { witness: Vec<usize> },
}

impl Stability {
    pub fn is_stable(&self) -> bool {
        matches!(self, Stability::Stable)
    }
}

/// A view of a pool reduced to a subset of its servers.
///
/// Kept classes are exactly those whose server sets lie inside the kept
/// servers.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPool<'a> {
    pub base: &'a PoolModel,
    pub kept_servers: BTreeSet<usize>,
    pub kept_classes: BTreeSet<usize>,
}

impl ReducedPool<'_> {
    pub fn aggregate_rates(&self) -> (f64, f64) {
        (
            self.kept_servers.iter().map(|&k| self.base.mu(k)).sum(),
            self.kept_classes.iter().map(|&i| self.base.lambda(i)).sum(),
        )
    }

    /// Materializes the reduction as a standalone pool.
    ///
    /// Kept servers keep their relative order and are renumbered from 1; kept
    /// servers that no kept class uses are pruned, which leaves every metric
    /// unchanged.
    pub fn to_model(&self) -> PoolModel {
        let order: Vec<usize> = self.kept_servers.iter().copied().collect();
        let new_id = |k: usize| order.binary_search(&k).expect("kept server") + 1;
        let raw = RawModel {
            servers: order
                .iter()
                .enumerate()
                .map(|(pos, &k)| ServerSpec {
                    id: pos + 1,
                    mu: self.base.mu(k),
                })
                .collect(),
            classes: self
                .kept_classes
                .iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let c = &self.base.classes[i - 1];
                    ClassSpec {
                        id: pos + 1,
                        lambda: c.lambda,
                        servers: c.servers.iter().map(|&k| new_id(k)).collect(),
                    }
                })
                .collect(),
        };
        PoolModel::validate(&raw).expect("a reduction of a valid pool is valid")
    }
}
