//! Line pools: every class is served by an interval of consecutive servers.
//!
//! Removing server `k` from an interval pool `a..b` leaves two independent
//! interval pools `a..k−1` and `k+1..b`, so the subset recursion only ever
//! visits intervals.

use serde::{Deserialize, Serialize};

use super::StructuredMetrics;
use crate::error::{Error, Result};

/// A class served by servers `i..=j` (1-based; for rings the arc may wrap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalClass {
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinePool {
    #[serde(rename = "K")]
    pub k: usize,
    pub mu: Vec<f64>,
    pub classes: Vec<IntervalClass>,
}

pub(crate) fn check_servers(k: usize, mu: &[f64]) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidDescriptor("K must be at least 1".into()));
    }
    if mu.len() != k {
        return Err(Error::InvalidDescriptor(format!(
            "{} service rates for K = {k}",
            mu.len()
        )));
    }
    if let Some(m) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::InvalidDescriptor(format!(
            "service rate {m} must be positive"
        )));
    }
    Ok(())
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidDescriptor(format!(
            "arrival rate {lambda} must be nonnegative"
        )));
    }
    Ok(())
}

impl LinePool {
    pub fn validate(&self) -> Result<()> {
        check_servers(self.k, &self.mu)?;
        for c in &self.classes {
            if c.i == 0 || c.i > c.j || c.j > self.k {
                return Err(Error::InvalidDescriptor(format!(
                    "interval {},{} outside 1..={}",
                    c.i, c.j, self.k
                )));
            }
            check_lambda(c.lambda)?;
        }
        Ok(())
    }
}

/// Square table indexed by `(a, b)` with `1 ≤ a ≤ K + 1` and `0 ≤ b ≤ K`;
/// `b = a − 1` stands for the empty interval.
struct IntervalTable {
    side: usize,
    data: Vec<f64>,
}

impl IntervalTable {
    fn new(k: usize, fill: f64) -> Self {
        IntervalTable {
            side: k + 2,
            data: vec![fill; (k + 2) * (k + 2)],
        }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.side + b]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, v: f64) {
        self.data[a * self.side + b] = v;
    }
}

/// `ψ` and `L` of every interval sub-pool, plus the rate sums they came from.
struct IntervalSolution {
    k: usize,
    mu: Vec<f64>,
    capacity: IntervalTable,
    arrivals: IntervalTable,
    psi: IntervalTable,
    mean: IntervalTable,
}

impl IntervalSolution {
    fn solve(p: &LinePool) -> Result<Self> {
        let k = p.k;
        // classes ending at server b with length ≤ n, cumulated over n
        let mut ending = vec![vec![0.0; k + 1]; k + 1];
        for c in &p.classes {
            ending[c.j][c.j - c.i + 1] += c.lambda;
        }
        for row in ending.iter_mut() {
            for n in 1..=k {
                row[n] += row[n - 1];
            }
        }
        let mut capacity = IntervalTable::new(k, 0.0);
        let mut arrivals = IntervalTable::new(k, 0.0);
        for a in 1..=k {
            for b in a..=k {
                capacity.set(a, b, capacity.get(a, b - 1) + p.mu[b - 1]);
                arrivals.set(a, b, arrivals.get(a, b - 1) + ending[b][b - a + 1]);
            }
        }

        let mut psi = IntervalTable::new(k, 1.0);
        let mut mean = IntervalTable::new(k, 0.0);
        for len in 1..=k {
            for a in 1..=k + 1 - len {
                let b = a + len - 1;
                let lambda = arrivals.get(a, b);
                if lambda == 0.0 {
                    continue;
                }
                let slack = capacity.get(a, b) - lambda;
                if slack <= 0.0 {
                    return Err(Error::Overloaded(format!(
                        "servers {a}..{b} cannot carry {lambda}"
                    )));
                }
                let mut harmonic = 0.0;
                let mut carried = 0.0;
                for s in a..=b {
                    let split = psi.get(a, s - 1) * psi.get(s + 1, b);
                    harmonic += p.mu[s - 1] / split;
                    carried += p.mu[s - 1] * (mean.get(a, s - 1) + mean.get(s + 1, b)) / split;
                }
                let psi_ab = slack / harmonic;
                psi.set(a, b, psi_ab);
                mean.set(a, b, (lambda + psi_ab * carried) / slack);
            }
        }
        Ok(IntervalSolution {
            k,
            mu: p.mu.clone(),
            capacity,
            arrivals,
            psi,
            mean,
        })
    }

    /// Mean number of jobs of the class on `i..=j` with rate `lambda`, in the whole line.
    fn class_mean(&self, c: &IntervalClass, table: &mut IntervalTable) -> f64 {
        if c.lambda == 0.0 {
            return 0.0;
        }
        let k = self.k;
        for a in (1..=c.i).rev() {
            for b in c.j..=k {
                let slack = self.capacity.get(a, b) - self.arrivals.get(a, b);
                let psi_ab = self.psi.get(a, b);
                let mut carried = 0.0;
                for s in a..c.i {
                    carried += self.mu[s - 1] * table.get(s + 1, b)
                        / (self.psi.get(a, s - 1) * self.psi.get(s + 1, b));
                }
                for s in c.j + 1..=b {
                    carried += self.mu[s - 1] * table.get(a, s - 1)
                        / (self.psi.get(a, s - 1) * self.psi.get(s + 1, b));
                }
                table.set(a, b, (c.lambda + psi_ab * carried) / slack);
            }
        }
        table.get(1, k)
    }
}

/// `ψ`, `L` and the mean job count of every class (in input order).
///
/// `O(K³)` for `ψ` and `L`; each class adds at most `O(K³)`.
pub fn line_metrics(p: &LinePool) -> Result<StructuredMetrics> {
    p.validate()?;
    let sol = IntervalSolution::solve(p)?;
    let mut table = IntervalTable::new(p.k, 0.0);
    let l_parts = p
        .classes
        .iter()
        .map(|c| sol.class_mean(c, &mut table))
        .collect();
    Ok(StructuredMetrics {
        psi: sol.psi.get(1, p.k),
        l_total: sol.mean.get(1, p.k),
        l_parts,
    })
}

/// `ψ` and `L` only, skipping the per-class tables.
pub fn line_global_metrics(p: &LinePool) -> Result<StructuredMetrics> {
    p.validate()?;
    let sol = IntervalSolution::solve(p)?;
    Ok(StructuredMetrics {
        psi: sol.psi.get(1, p.k),
        l_total: sol.mean.get(1, p.k),
        l_parts: vec![],
    })
}

/// Homogeneous line: `K` unit-rate servers, one class per window of `d`
/// consecutive servers, all classes with the same rate and overall load `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineHomogeneous {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub rho: f64,
}

impl LineHomogeneous {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.k {
            return Err(Error::InvalidDescriptor(format!(
                "d = {} outside 1..={}",
                self.d, self.k
            )));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidDescriptor(format!(
                "load {} must be nonnegative",
                self.rho
            )));
        }
        if self.rho >= 1.0 {
            return Err(Error::Overloaded(format!(
                "load {} is not below 1",
                self.rho
            )));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.k - self.d + 1
    }

    /// Arrival rate of each class in units of the server rate.
    pub fn class_rate(&self) -> f64 {
        self.k as f64 * self.rho / self.class_count() as f64
    }

    /// The same pool written out as an explicit line.
    pub fn to_line_pool(&self) -> LinePool {
        let rate = self.class_rate();
        LinePool {
            k: self.k,
            mu: vec![1.0; self.k],
            classes: (1..=self.class_count())
                .map(|i| IntervalClass {
                    i,
                    j: i + self.d - 1,
                    lambda: rate,
                })
                .collect(),
        }
    }
}

/// Prefix tables `ψ_{|1..ℓ}` and `L_{|1..ℓ}` for `ℓ = 0..=K`.
struct PrefixSolution {
    psi: Vec<f64>,
    mean: Vec<f64>,
    load: Vec<f64>,
}

fn prefix_solution(p: &LineHomogeneous) -> PrefixSolution {
    let (k, d) = (p.k, p.d);
    let mut psi = vec![1.0; k + 1];
    let mut mean = vec![0.0; k + 1];
    let mut load = vec![0.0; k + 1];
    let shrink = |l: usize| 1.0 - (d - 1) as f64 / l as f64;
    for l in d..=k {
        let rho_l = p.rho * shrink(l) / shrink(k);
        load[l] = rho_l;
        let mut harmonic = 0.0;
        let mut carried = 0.0;
        for s in 1..=l {
            let split = psi[s - 1] * psi[l - s];
            harmonic += 1.0 / split;
            carried += (mean[s - 1] + mean[l - s]) / split;
        }
        psi[l] = (1.0 - rho_l) / (harmonic / l as f64);
        mean[l] = (rho_l + psi[l] / l as f64 * carried) / (1.0 - rho_l);
    }
    PrefixSolution { psi, mean, load }
}

/// `ψ` and `L` of the homogeneous line in `O(K²)`.
pub fn line_homogeneous_global(p: &LineHomogeneous) -> Result<StructuredMetrics> {
    p.validate()?;
    let sol = prefix_solution(p);
    Ok(StructuredMetrics {
        psi: sol.psi[p.k],
        l_total: sol.mean[p.k],
        l_parts: vec![],
    })
}

/// `ψ`, `L` and the mean job count of each class, class `i` being the window
/// starting at server `i`. `O(K³)` because of the per-class tables.
pub fn line_homogeneous_metrics(p: &LineHomogeneous) -> Result<StructuredMetrics> {
    p.validate()?;
    let (k, d) = (p.k, p.d);
    let sol = prefix_solution(p);
    let n = p.class_count();
    let rate = p.class_rate();
    // per_class[i][ℓ]: class i in the prefix pool 1..ℓ
    let mut per_class = vec![vec![0.0; k + 1]; n + 1];
    for l in d..=k {
        let scale = l as f64 * (1.0 - sol.load[l]);
        for i in 1..=(l + 1 - d) {
            let mut carried = 0.0;
            for s in 1..i {
                carried += per_class[i - s][l - s] / (sol.psi[s - 1] * sol.psi[l - s]);
            }
            for s in i + d..=l {
                carried += per_class[i][s - 1] / (sol.psi[s - 1] * sol.psi[l - s]);
            }
            per_class[i][l] = (rate + sol.psi[l] * carried) / scale;
        }
    }
    Ok(StructuredMetrics {
        psi: sol.psi[k],
        l_total: sol.mean[k],
        l_parts: (1..=n).map(|i| per_class[i][k]).collect(),
    })
}
