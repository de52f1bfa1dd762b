//! Polynomial-time solvers for structured pool families.
//!
//! Every family can also be [expanded](Structured::expand) into an explicit
//! [`PoolModel`], which is how the solvers are cross-checked against the
//! generic recursion.

pub mod line;
pub mod nested;
pub mod randomized;
pub mod ring;

use serde::{Deserialize, Serialize};

pub use line::{
    line_global_metrics, line_homogeneous_global, line_homogeneous_metrics, line_metrics,
    IntervalClass, LineHomogeneous, LinePool,
};
pub use nested::{nested_metrics, nested_tree_build, NestedBuild, NestedTree, TreeNode};
pub use randomized::{
    heterogeneous_degrees_metrics, heterogeneous_groups_metrics, randomized_homogeneous_metrics,
    DegreeProfile, DegreeType, GroupType, HeterogeneousDegrees, HeterogeneousGroups,
    RandomizedHomogeneous, ServerGroup,
};
pub use ring::{ring_homogeneous_metrics, ring_metrics, RingHomogeneous, RingPool};

use crate::error::{Error, Result};
use crate::model::{ClassSpec, PoolModel, RawModel, ServerSpec};

/// Result of a structured solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredMetrics {
    pub psi: f64,
    #[serde(rename = "L")]
    pub l_total: f64,
    /// Mean job counts per class or per job type, depending on the family;
    /// see [`Structured::part_kind`]. Empty when the family only has global metrics.
    #[serde(rename = "L_parts")]
    pub l_parts: Vec<f64>,
}

/// Default cap on the number of classes produced by [`Structured::expand`].
pub const DEFAULT_MAX_EXPANSION: usize = 200_000;

/// Any structured family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Structured {
    RandomizedHomogeneous(RandomizedHomogeneous),
    HeterogeneousDegrees(HeterogeneousDegrees),
    HeterogeneousGroups(HeterogeneousGroups),
    Nested(RawModel),
    Line(LinePool),
    Ring(RingPool),
    LineHomogeneous(LineHomogeneous),
    RingHomogeneous(RingHomogeneous),
}

/// What the entries of [`StructuredMetrics::l_parts`] refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartKind {
    Class,
    Type,
    None,
}

impl Structured {
    pub fn family(&self) -> &'static str {
        match self {
            Structured::RandomizedHomogeneous(_) => "randomized_homogeneous",
            Structured::HeterogeneousDegrees(_) => "heterogeneous_degrees",
            Structured::HeterogeneousGroups(_) => "heterogeneous_groups",
            Structured::Nested(_) => "nested",
            Structured::Line(_) => "line",
            Structured::Ring(_) => "ring",
            Structured::LineHomogeneous(_) => "line_homogeneous",
            Structured::RingHomogeneous(_) => "ring_homogeneous",
        }
    }

    pub fn part_kind(&self) -> PartKind {
        match self {
            Structured::HeterogeneousDegrees(_) | Structured::HeterogeneousGroups(_) => {
                PartKind::Type
            }
            Structured::Nested(_)
            | Structured::Line(_)
            | Structured::Ring(_)
            | Structured::LineHomogeneous(_) => PartKind::Class,
            Structured::RandomizedHomogeneous(_) | Structured::RingHomogeneous(_) => PartKind::None,
        }
    }

    /// Arrival rate of each part, aligned with [`StructuredMetrics::l_parts`].
    pub fn part_arrivals(&self) -> Vec<f64> {
        match self {
            Structured::HeterogeneousDegrees(p) => p
                .types
                .iter()
                .map(|t| p.k as f64 * p.lambda * t.p)
                .collect(),
            Structured::HeterogeneousGroups(p) => {
                let total = p.server_count() as f64 * p.lambda;
                p.types.iter().map(|t| total * t.p).collect()
            }
            Structured::Nested(raw) => raw.classes.iter().map(|c| c.lambda).collect(),
            Structured::Line(p) => p.classes.iter().map(|c| c.lambda).collect(),
            Structured::Ring(p) => p.classes.iter().map(|c| c.lambda).collect(),
            Structured::LineHomogeneous(p) => vec![p.class_rate(); p.class_count()],
            Structured::RandomizedHomogeneous(_) | Structured::RingHomogeneous(_) => vec![],
        }
    }

    /// Total arrival rate.
    pub fn total_arrivals(&self) -> f64 {
        match self {
            Structured::RandomizedHomogeneous(p) => p.k as f64 * p.lambda,
            Structured::HeterogeneousDegrees(p) => p.k as f64 * p.lambda,
            Structured::HeterogeneousGroups(p) => p.server_count() as f64 * p.lambda,
            Structured::LineHomogeneous(p) => p.k as f64 * p.rho,
            Structured::RingHomogeneous(p) => p.k as f64 * p.rho,
            other => other.part_arrivals().iter().sum(),
        }
    }

    /// Total service rate.
    pub fn total_capacity(&self) -> f64 {
        match self {
            Structured::RandomizedHomogeneous(p) => p.k as f64 * p.mu,
            Structured::HeterogeneousDegrees(p) => p.k as f64 * p.mu,
            Structured::HeterogeneousGroups(p) => p.groups.iter().map(|g| g.k as f64 * g.mu).sum(),
            Structured::Nested(raw) => raw.servers.iter().map(|s| s.mu).sum(),
            Structured::Line(p) => p.mu.iter().sum(),
            Structured::Ring(p) => p.mu.iter().sum(),
            Structured::LineHomogeneous(p) => p.k as f64,
            Structured::RingHomogeneous(p) => p.k as f64,
        }
    }

    /// Runs the family's dedicated solver.
    pub fn solve(&self) -> Result<StructuredMetrics> {
        match self {
            Structured::RandomizedHomogeneous(p) => randomized_homogeneous_metrics(p),
            Structured::HeterogeneousDegrees(p) => heterogeneous_degrees_metrics(p),
            Structured::HeterogeneousGroups(p) => heterogeneous_groups_metrics(p),
            Structured::Nested(raw) => {
                let model = PoolModel::validate(raw)?;
                match nested_tree_build(&model) {
                    NestedBuild::Nested(tree) => nested_metrics(&tree),
                    NestedBuild::NotNested(a, b) => Err(Error::InvalidDescriptor(format!(
                        "classes {a} and {b} overlap without nesting"
                    ))),
                }
            }
            Structured::Line(p) => line_metrics(p),
            Structured::Ring(p) => ring_metrics(p),
            Structured::LineHomogeneous(p) => line_homogeneous_metrics(p),
            Structured::RingHomogeneous(p) => ring_homogeneous_metrics(p),
        }
    }

    /// Explicit pool with one class per feasible assignment.
    ///
    /// Randomized families split each type's arrivals evenly over its
    /// assignments; classes of different types are never merged, even when
    /// their server sets coincide. Servers of heterogeneous groups are
    /// numbered group by group.
    pub fn expand(&self, max_classes: usize) -> Result<PoolModel> {
        Ok(self.expand_with_parts(max_classes)?.0)
    }

    /// Like [`expand`](Self::expand), also returning for every expanded class
    /// the index of the part (type or class) it belongs to. Families without
    /// parts map every class to 0.
    pub fn expand_with_parts(&self, max_classes: usize) -> Result<(PoolModel, Vec<usize>)> {
        let (raw, parts) = match self {
            Structured::RandomizedHomogeneous(p) => {
                let h = HeterogeneousDegrees {
                    k: p.k,
                    mu: p.mu,
                    lambda: p.lambda,
                    types: vec![DegreeType { p: 1.0, d: p.d }],
                };
                expand_degrees(&h, max_classes)?
            }
            Structured::HeterogeneousDegrees(p) => expand_degrees(p, max_classes)?,
            Structured::HeterogeneousGroups(p) => expand_groups(p, max_classes)?,
            Structured::Nested(raw) => (raw.clone(), (0..raw.classes.len()).collect()),
            Structured::Line(p) => {
                p.validate()?;
                interval_model(
                    &p.mu,
                    p.classes.iter().map(|c| (c.lambda, (c.i..=c.j).collect())),
                )
            }
            Structured::Ring(p) => {
                p.validate()?;
                interval_model(
                    &p.mu,
                    p.classes.iter().map(|c| (c.lambda, p.arc_servers(c))),
                )
            }
            Structured::LineHomogeneous(p) => {
                p.validate()?;
                return Structured::Line(p.to_line_pool()).expand_with_parts(max_classes);
            }
            Structured::RingHomogeneous(p) => {
                p.validate()?;
                let (model, parts) =
                    Structured::Ring(p.to_ring_pool()).expand_with_parts(max_classes)?;
                return Ok((model, vec![0; parts.len()]));
            }
        };
        Ok((PoolModel::validate(&raw)?, parts))
    }
}

fn interval_model(
    mu: &[f64],
    classes: impl Iterator<Item = (f64, Vec<usize>)>,
) -> (RawModel, Vec<usize>) {
    let classes: Vec<(f64, Vec<usize>)> = classes.collect();
    (
        RawModel::from_rates(mu, &classes),
        (0..classes.len()).collect(),
    )
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `d`-subsets of `offset + 1 ..= offset + n` in lexicographic order.
fn combinations(n: usize, d: usize, offset: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=d).collect();
    if d > n {
        return out;
    }
    loop {
        out.push(cur.iter().map(|&x| x + offset).collect());
        let Some(pos) = (0..d).rev().find(|&p| cur[p] < n - d + p + 1) else {
            return out;
        };
        cur[pos] += 1;
        for q in pos + 1..d {
            cur[q] = cur[q - 1] + 1;
        }
    }
}

fn expand_degrees(p: &HeterogeneousDegrees, max_classes: usize) -> Result<(RawModel, Vec<usize>)> {
    // validation through the solver's own checks
    DegreeProfile::new(p.k, &p.types)?;
    let count: f64 = p.types.iter().map(|t| binom(p.k, t.d)).sum();
    if count > max_classes as f64 {
        return Err(Error::ExpansionTooLarge {
            classes: count,
            limit: max_classes,
        });
    }
    let total = p.k as f64 * p.lambda;
    let mut classes = Vec::new();
    let mut parts = Vec::new();
    for (u, t) in p.types.iter().enumerate() {
        let sets = combinations(p.k, t.d, 0);
        let rate = total * t.p / sets.len() as f64;
        parts.extend(std::iter::repeat_n(u, sets.len()));
        classes.extend(sets.into_iter().map(|s| (rate, s)));
    }
    Ok((RawModel::from_rates(&vec![p.mu; p.k], &classes), parts))
}

fn expand_groups(p: &HeterogeneousGroups, max_classes: usize) -> Result<(RawModel, Vec<usize>)> {
    p.validate()?;
    let count: f64 = p
        .types
        .iter()
        .map(|t| {
            p.groups
                .iter()
                .zip(&t.d)
                .map(|(g, &d)| binom(g.k, d))
                .product::<f64>()
        })
        .sum();
    if count > max_classes as f64 {
        return Err(Error::ExpansionTooLarge {
            classes: count,
            limit: max_classes,
        });
    }
    let mut offsets = Vec::with_capacity(p.groups.len());
    let mut mu = Vec::new();
    for g in &p.groups {
        offsets.push(mu.len());
        mu.extend(std::iter::repeat_n(g.mu, g.k));
    }
    let total = p.server_count() as f64 * p.lambda;
    let mut classes = Vec::new();
    let mut parts = Vec::new();
    for (u, t) in p.types.iter().enumerate() {
        let mut sets: Vec<Vec<usize>> = vec![vec![]];
        for ((g, &d), &off) in p.groups.iter().zip(&t.d).zip(&offsets) {
            let choices = combinations(g.k, d, off);
            sets = sets
                .iter()
                .flat_map(|s| {
                    choices
                        .iter()
                        .map(move |c| s.iter().chain(c).copied().collect::<Vec<_>>())
                })
                .collect();
        }
        let rate = total * t.p / sets.len() as f64;
        parts.extend(std::iter::repeat_n(u, sets.len()));
        classes.extend(sets.into_iter().map(|s| (rate, s)));
    }
    let raw = RawModel {
        servers: mu
            .iter()
            .enumerate()
            .map(|(k, &mu)| ServerSpec { id: k + 1, mu })
            .collect(),
        classes: classes
            .into_iter()
            .enumerate()
            .map(|(i, (lambda, servers))| ClassSpec {
                id: i + 1,
                lambda,
                servers,
            })
            .collect(),
    };
    Ok((raw, parts))
}
