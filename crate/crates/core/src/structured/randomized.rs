//! Randomized assignment: each job picks its servers uniformly at random.
//!
//! Server exchangeability collapses the subset recursion to a recursion on
//! the number of remaining servers (or on the per-group counts when servers
//! come in groups with different rates).

use serde::{Deserialize, Serialize};

use super::StructuredMetrics;
use crate::error::{Error, Result};

/// `K` servers of rate `mu`; jobs arrive at total rate `K * lambda` and each
/// is assigned to `d` servers chosen uniformly at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedHomogeneous {
    #[serde(rename = "K")]
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeType {
    /// Fraction of the arrivals.
    pub p: f64,
    /// Number of servers each job of this type is assigned to.
    pub d: usize,
}

/// Like [`RandomizedHomogeneous`], but job types differ in their degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneousDegrees {
    #[serde(rename = "K")]
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    pub types: Vec<DegreeType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerGroup {
    #[serde(rename = "K")]
    pub k: usize,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupType {
    pub p: f64,
    /// Servers drawn from each group, one entry per group.
    pub d: Vec<usize>,
}

/// Groups of identical servers; a type-`u` job draws `d[s]` servers from
/// group `s`. Total arrival rate is `K * lambda` with `K` the server count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneousGroups {
    pub groups: Vec<ServerGroup>,
    pub lambda: f64,
    pub types: Vec<GroupType>,
}

/// Upper bound on the per-group count table of [`heterogeneous_groups_metrics`].
pub const MAX_GROUP_TABLE: usize = 10_000_000;

/// `C(ℓ−1, d−1) / C(K−1, d−1)` for `ℓ = 0..=K`, zero when `ℓ < d`.
///
/// Evaluated by the incremental ratio `C(ℓ−1,d−1) = (ℓ−1)/(ℓ−d) · C(ℓ−2,d−1)`,
/// run downward from `ℓ = K` so that nothing overflows.
pub fn restricted_load_factors(k: usize, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; k + 1];
    if d == 0 || d > k {
        return v;
    }
    v[k] = 1.0;
    for l in (d + 1..=k).rev() {
        v[l - 1] = v[l] * (l - d) as f64 / (l - 1) as f64;
    }
    v
}

/// `C(ℓ, d) / C(K, d)` for `ℓ = 0..=K`, zero when `ℓ < d`.
pub fn binomial_ratios(k: usize, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; k + 1];
    if d > k {
        return v;
    }
    v[k] = 1.0;
    for l in (d + 1..=k).rev() {
        v[l - 1] = v[l] * (l - d) as f64 / l as f64;
    }
    v
}

fn check_rates(mu: f64, lambda: f64) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidDescriptor(format!(
            "mu must be positive, got {mu}"
        )));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidDescriptor(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

fn check_probabilities<'a>(ps: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut total = 0.0;
    for &p in ps {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidDescriptor(format!(
                "type probability {p} must be positive"
            )));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDescriptor(format!(
            "type probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// ρ-independent part of the heterogeneous-degrees recursion.
///
/// Holds `ρ_{u|ℓ} / ρ` for every type and server count, so that sweeping the
/// load costs `O(K)` per point after an `O(NK)` setup.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    k: usize,
    degrees: Vec<usize>,
    /// `p_u C(ℓ−1,d_u−1)/C(K−1,d_u−1)`, one row per type.
    type_factors: Vec<Vec<f64>>,
    /// Row sums over types.
    total_factors: Vec<f64>,
}

impl DegreeProfile {
    pub fn new(k: usize, types: &[DegreeType]) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDescriptor("K must be at least 1".into()));
        }
        if types.is_empty() {
            return Err(Error::InvalidDescriptor(
                "at least one job type is required".into(),
            ));
        }
        check_probabilities(types.iter().map(|t| &t.p))?;
        if let Some(t) = types.iter().find(|t| t.d == 0 || t.d > k) {
            return Err(Error::InvalidDescriptor(format!(
                "degree {} outside 1..={k}",
                t.d
            )));
        }
        let type_factors: Vec<Vec<f64>> = types
            .iter()
            .map(|t| {
                restricted_load_factors(k, t.d)
                    .into_iter()
                    .map(|f| t.p * f)
                    .collect()
            })
            .collect();
        let total_factors = (0..=k)
            .map(|l| type_factors.iter().map(|row| row[l]).sum())
            .collect();
        Ok(DegreeProfile {
            k,
            degrees: types.iter().map(|t| t.d).collect(),
            type_factors,
            total_factors,
        })
    }

    /// `ψ`, `L` and the per-type mean job counts at load `rho = λ / μ`.
    pub fn metrics(&self, rho: f64) -> Result<StructuredMetrics> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidDescriptor(format!(
                "load must be nonnegative, got {rho}"
            )));
        }
        if rho >= 1.0 {
            return Err(Error::Overloaded(format!("load {rho} is not below 1")));
        }
        let d_min = *self.degrees.iter().min().expect("nonempty");
        let mut psi = 1.0;
        let mut total = 0.0;
        for l in d_min..=self.k {
            let r = rho * self.total_factors[l];
            psi *= 1.0 - r;
            total += r / (1.0 - r);
        }
        let per_type = self
            .type_factors
            .iter()
            .zip(&self.degrees)
            .map(|(row, &d)| {
                (d..=self.k)
                    .map(|l| {
                        let own = rho * row[l];
                        let others = rho * (self.total_factors[l] - row[l]);
                        let r = own / (1.0 - others);
                        r / (1.0 - r)
                    })
                    .sum()
            })
            .collect();
        Ok(StructuredMetrics {
            psi,
            l_total: total,
            l_parts: per_type,
        })
    }
}

/// `ψ = Π_{ℓ=d}^{K} (1 − ρ_{|ℓ})` and `L = Σ_{ℓ=d}^{K} ρ_{|ℓ}/(1 − ρ_{|ℓ})`.
///
/// The single part of the returned metrics is `L` itself.
pub fn randomized_homogeneous_metrics(p: &RandomizedHomogeneous) -> Result<StructuredMetrics> {
    check_rates(p.mu, p.lambda)?;
    let profile = DegreeProfile::new(p.k, &[DegreeType { p: 1.0, d: p.d }])?;
    profile.metrics(p.lambda / p.mu)
}

pub fn heterogeneous_degrees_metrics(p: &HeterogeneousDegrees) -> Result<StructuredMetrics> {
    check_rates(p.mu, p.lambda)?;
    DegreeProfile::new(p.k, &p.types)?.metrics(p.lambda / p.mu)
}

impl HeterogeneousGroups {
    pub fn server_count(&self) -> usize {
        self.groups.iter().map(|g| g.k).sum()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidDescriptor(
                "at least one server group is required".into(),
            ));
        }
        for g in &self.groups {
            check_rates(g.mu, self.lambda)?;
            if g.k == 0 {
                return Err(Error::InvalidDescriptor("empty server group".into()));
            }
        }
        if self.types.is_empty() {
            return Err(Error::InvalidDescriptor(
                "at least one job type is required".into(),
            ));
        }
        check_probabilities(self.types.iter().map(|t| &t.p))?;
        for t in &self.types {
            if t.d.len() != self.groups.len() {
                return Err(Error::InvalidDescriptor(format!(
                    "type degrees {:?} do not match {} groups",
                    t.d,
                    self.groups.len()
                )));
            }
            if t.d.iter().all(|&d| d == 0) {
                return Err(Error::InvalidDescriptor(
                    "a type must use at least one server".into(),
                ));
            }
            if let Some((d, g)) = t.d.iter().zip(&self.groups).find(|(&d, g)| d > g.k) {
                return Err(Error::InvalidDescriptor(format!(
                    "degree {d} exceeds group size {}",
                    g.k
                )));
            }
        }
        Ok(())
    }
}

/// Recursion on the vector `ℓ` of remaining servers per group.
///
/// Entries are visited in increasing mixed-radix order, so every `ℓ − e_s`
/// is ready before `ℓ`. A restricted system with no arrivals is empty with
/// probability 1 and holds no jobs.
pub fn heterogeneous_groups_metrics(p: &HeterogeneousGroups) -> Result<StructuredMetrics> {
    p.validate()?;
    let groups = &p.groups;
    let n_groups = groups.len();
    let entries: f64 = groups.iter().map(|g| (g.k + 1) as f64).product();
    if entries > MAX_GROUP_TABLE as f64 {
        return Err(Error::TooManyGroups {
            entries,
            limit: MAX_GROUP_TABLE,
        });
    }
    let entries = entries as usize;
    let mut strides = vec![1usize; n_groups];
    for s in 1..n_groups {
        strides[s] = strides[s - 1] * (groups[s - 1].k + 1);
    }
    let total_arrivals = p.server_count() as f64 * p.lambda;
    // ratios[u][s][ℓ_s] = C(ℓ_s, d_us) / C(K_s, d_us)
    let ratios: Vec<Vec<Vec<f64>>> = p
        .types
        .iter()
        .map(|t| {
            groups
                .iter()
                .zip(&t.d)
                .map(|(g, &d)| binomial_ratios(g.k, d))
                .collect()
        })
        .collect();
    let n_types = p.types.len();

    let mut psi = vec![1.0; entries];
    let mut l_total = vec![0.0; entries];
    let mut l_type = vec![0.0; entries * n_types];
    let mut counts = vec![0usize; n_groups];
    let mut type_arrivals = vec![0.0; n_types];

    for idx in 0..entries {
        if idx > 0 {
            // increment the mixed-radix counter, group 0 fastest
            for s in 0..n_groups {
                if counts[s] < groups[s].k {
                    counts[s] += 1;
                    break;
                }
                counts[s] = 0;
            }
        }
        let capacity: f64 = counts
            .iter()
            .zip(groups)
            .map(|(&c, g)| c as f64 * g.mu)
            .sum();
        for (u, t) in p.types.iter().enumerate() {
            let share: f64 = (0..n_groups).map(|s| ratios[u][s][counts[s]]).product();
            type_arrivals[u] = total_arrivals * t.p * share;
        }
        let arrivals: f64 = type_arrivals.iter().sum();
        if arrivals == 0.0 {
            continue;
        }
        let rho = arrivals / capacity;
        if rho >= 1.0 {
            return Err(Error::Overloaded(format!(
                "servers per group {counts:?} carry load {rho}"
            )));
        }
        let mut harmonic = 0.0;
        for s in 0..n_groups {
            if counts[s] > 0 {
                harmonic += counts[s] as f64 * groups[s].mu / psi[idx - strides[s]];
            }
        }
        let psi_here = (1.0 - rho) * capacity / harmonic;
        psi[idx] = psi_here;

        let mut carried = 0.0;
        let mut carried_type = vec![0.0; n_types];
        for s in 0..n_groups {
            if counts[s] == 0 {
                continue;
            }
            let prev = idx - strides[s];
            let w = counts[s] as f64 * groups[s].mu * psi_here / psi[prev];
            carried += w * l_total[prev];
            for u in 0..n_types {
                carried_type[u] += w * l_type[prev * n_types + u];
            }
        }
        l_total[idx] = rho / (1.0 - rho) + carried / ((1.0 - rho) * capacity);
        for u in 0..n_types {
            let own = type_arrivals[u];
            let rho_u = own / (capacity - (arrivals - own));
            l_type[idx * n_types + u] =
                rho_u / (1.0 - rho_u) + carried_type[u] / ((1.0 - rho) * capacity);
        }
    }
    let last = entries - 1;
    Ok(StructuredMetrics {
        psi: psi[last],
        l_total: l_total[last],
        l_parts: l_type[last * n_types..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn binom(n: usize, k: usize) -> f64 {
        if k > n {
            return 0.0;
        }
        (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
    }

    #[test]
    fn load_factors_match_direct_binomials() {
        for k in 1..=12 {
            for d in 1..=k {
                let v = restricted_load_factors(k, d);
                for l in 0..=k {
                    let expected = if l < d {
                        0.0
                    } else {
                        binom(l - 1, d - 1) / binom(k - 1, d - 1)
                    };
                    assert_relative_eq!(v[l], expected, max_relative = 1e-13);
                }
                let r = binomial_ratios(k, d);
                for l in 0..=k {
                    assert_relative_eq!(r[l], binom(l, d) / binom(k, d), max_relative = 1e-13);
                }
            }
        }
        assert_eq!(binomial_ratios(4, 0), vec![1.0; 5]);
    }

    #[test]
    fn large_k_factors_stay_finite() {
        let v = restricted_load_factors(100_000, 5_000);
        assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert_eq!(v[100_000], 1.0);
    }

    #[test]
    fn homogeneous_k3_d2() {
        let m = randomized_homogeneous_metrics(&RandomizedHomogeneous {
            k: 3,
            mu: 1.0,
            lambda: 0.5,
            d: 2,
        })
        .unwrap();
        // ρ_{|2} = 0.25, ρ_{|3} = 0.5
        assert_relative_eq!(m.psi, 0.375, max_relative = 1e-15);
        assert_relative_eq!(m.l_total, 4.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn homogeneous_complete_pooling() {
        for rho in [0.1, 0.5, 0.93] {
            let m = randomized_homogeneous_metrics(&RandomizedHomogeneous {
                k: 7,
                mu: 2.0,
                lambda: 2.0 * rho,
                d: 7,
            })
            .unwrap();
            assert_relative_eq!(m.psi, 1.0 - rho, max_relative = 1e-14);
            assert_relative_eq!(m.l_total, rho / (1.0 - rho), max_relative = 1e-14);
        }
    }

    #[test]
    fn overload_and_bad_descriptors() {
        let p = RandomizedHomogeneous {
            k: 3,
            mu: 1.0,
            lambda: 1.0,
            d: 2,
        };
        assert!(matches!(
            randomized_homogeneous_metrics(&p),
            Err(Error::Overloaded(_))
        ));
        let p = RandomizedHomogeneous {
            k: 3,
            mu: 1.0,
            lambda: 0.5,
            d: 4,
        };
        assert!(matches!(
            randomized_homogeneous_metrics(&p),
            Err(Error::InvalidDescriptor(_))
        ));
        let p = HeterogeneousDegrees {
            k: 3,
            mu: 1.0,
            lambda: 0.5,
            types: vec![DegreeType { p: 0.5, d: 1 }, DegreeType { p: 0.4, d: 2 }],
        };
        assert!(matches!(
            heterogeneous_degrees_metrics(&p),
            Err(Error::InvalidDescriptor(_))
        ));
    }

    #[test]
    fn degrees_k2_hand_values() {
        let p = HeterogeneousDegrees {
            k: 2,
            mu: 1.0,
            lambda: 0.5,
            types: vec![DegreeType { p: 0.5, d: 1 }, DegreeType { p: 0.5, d: 2 }],
        };
        let m = heterogeneous_degrees_metrics(&p).unwrap();
        // ρ_{|1} = 0.25, ρ_{|2} = 0.5
        assert_relative_eq!(m.psi, 0.375, max_relative = 1e-15);
        assert_relative_eq!(m.l_parts[0], 5.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(
            m.l_parts.iter().sum::<f64>(),
            m.l_total,
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_type_is_homogeneous_bitwise() {
        for (k, d, rho) in [(5, 2, 0.3), (10, 10, 0.9), (40, 7, 0.75)] {
            let h = randomized_homogeneous_metrics(&RandomizedHomogeneous {
                k,
                mu: 1.0,
                lambda: rho,
                d,
            })
            .unwrap();
            let g = heterogeneous_degrees_metrics(&HeterogeneousDegrees {
                k,
                mu: 1.0,
                lambda: rho,
                types: vec![DegreeType { p: 1.0, d }],
            })
            .unwrap();
            assert_eq!(h.psi, g.psi);
            assert_eq!(h.l_total, g.l_total);
        }
    }

    #[test]
    fn one_group_matches_degrees() {
        let types = vec![DegreeType { p: 0.3, d: 1 }, DegreeType { p: 0.7, d: 3 }];
        let a = heterogeneous_degrees_metrics(&HeterogeneousDegrees {
            k: 6,
            mu: 1.5,
            lambda: 0.9,
            types: types.clone(),
        })
        .unwrap();
        let b = heterogeneous_groups_metrics(&HeterogeneousGroups {
            groups: vec![ServerGroup { k: 6, mu: 1.5 }],
            lambda: 0.9,
            types: types
                .iter()
                .map(|t| GroupType {
                    p: t.p,
                    d: vec![t.d],
                })
                .collect(),
        })
        .unwrap();
        assert_relative_eq!(a.psi, b.psi, max_relative = 1e-12);
        assert_relative_eq!(a.l_total, b.l_total, max_relative = 1e-12);
        for (x, y) in a.l_parts.iter().zip(&b.l_parts) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn two_singleton_groups_pool_completely() {
        for lambda in [0.2, 0.7, 1.4] {
            let m = heterogeneous_groups_metrics(&HeterogeneousGroups {
                groups: vec![ServerGroup { k: 1, mu: 1.0 }, ServerGroup { k: 1, mu: 2.0 }],
                lambda,
                types: vec![GroupType {
                    p: 1.0,
                    d: vec![1, 1],
                }],
            })
            .unwrap();
            assert_relative_eq!(m.psi, 1.0 - 2.0 * lambda / 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn group_overload_inside_one_group() {
        // type confined to group 1 saturates it although the pool is underloaded
        let p = HeterogeneousGroups {
            groups: vec![
                ServerGroup { k: 1, mu: 1.0 },
                ServerGroup { k: 1, mu: 10.0 },
            ],
            lambda: 0.6,
            types: vec![GroupType {
                p: 1.0,
                d: vec![1, 0],
            }],
        };
        assert!(matches!(
            heterogeneous_groups_metrics(&p),
            Err(Error::Overloaded(_))
        ));
    }
}
