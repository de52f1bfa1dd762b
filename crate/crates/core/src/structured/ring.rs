//! Ring pools: classes are arcs of consecutive servers on a cycle.
//!
//! Removing server `k` from the ring leaves the line `k+1, …, k−1`, and every
//! proper arc behaves like a line, so the recursion runs over arcs
//! `(start, length)` with lengths below `K`.

use serde::{Deserialize, Serialize};

use super::line::{
    check_lambda, check_servers, line_homogeneous_global, IntervalClass, LineHomogeneous,
};
use super::StructuredMetrics;
use crate::error::{Error, Result};

/// Servers `1..=K` on a cycle. A class `i, j` with `j < i` wraps past server
/// `K`; a class covering all `K` servers (e.g. `1, K` or `i, i − 1`) uses the
/// whole ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingPool {
    #[serde(rename = "K")]
    pub k: usize,
    pub mu: Vec<f64>,
    pub classes: Vec<IntervalClass>,
}

impl RingPool {
    pub fn validate(&self) -> Result<()> {
        check_servers(self.k, &self.mu)?;
        for c in &self.classes {
            if c.i == 0 || c.j == 0 || c.i > self.k || c.j > self.k {
                return Err(Error::InvalidDescriptor(format!(
                    "arc {},{} outside 1..={}",
                    c.i, c.j, self.k
                )));
            }
            check_lambda(c.lambda)?;
        }
        Ok(())
    }

    /// Number of servers on the arc of `c`.
    pub fn arc_len(&self, c: &IntervalClass) -> usize {
        (c.j + self.k - c.i) % self.k + 1
    }

    /// 1-based server ids of the arc of `c`, in ring order.
    pub fn arc_servers(&self, c: &IntervalClass) -> Vec<usize> {
        (0..self.arc_len(c))
            .map(|t| (c.i - 1 + t) % self.k + 1)
            .collect()
    }
}

/// Tables indexed by `(start, len)`, `start` 0-based, `0 ≤ len < K`.
struct ArcTable {
    k: usize,
    data: Vec<f64>,
}

impl ArcTable {
    fn new(k: usize, fill: f64) -> Self {
        ArcTable {
            k,
            data: vec![fill; k * k],
        }
    }

    #[inline]
    fn get(&self, start: usize, len: usize) -> f64 {
        self.data[(start % self.k) * self.k + len]
    }

    #[inline]
    fn set(&mut self, start: usize, len: usize, v: f64) {
        self.data[(start % self.k) * self.k + len] = v;
    }
}

struct ArcSolution {
    k: usize,
    mu: Vec<f64>,
    capacity: ArcTable,
    arrivals: ArcTable,
    psi: ArcTable,
    mean: ArcTable,
    total_capacity: f64,
    total_arrivals: f64,
}

impl ArcSolution {
    fn solve(p: &RingPool) -> Result<Self> {
        let k = p.k;
        // proper arcs ending at server e (0-based) with length ≤ n, cumulated over n
        let mut ending = vec![vec![0.0; k]; k];
        for c in &p.classes {
            let len = p.arc_len(c);
            if len < k {
                ending[c.j - 1][len] += c.lambda;
            }
        }
        for row in ending.iter_mut() {
            for n in 1..k {
                row[n] += row[n - 1];
            }
        }
        let mut capacity = ArcTable::new(k, 0.0);
        let mut arrivals = ArcTable::new(k, 0.0);
        for a in 0..k {
            for len in 1..k {
                let e = (a + len - 1) % k;
                capacity.set(a, len, capacity.get(a, len - 1) + p.mu[e]);
                arrivals.set(a, len, arrivals.get(a, len - 1) + ending[e][len]);
            }
        }

        let mut psi = ArcTable::new(k, 1.0);
        let mut mean = ArcTable::new(k, 0.0);
        for len in 1..k {
            for a in 0..k {
                let lambda = arrivals.get(a, len);
                if lambda == 0.0 {
                    continue;
                }
                let slack = capacity.get(a, len) - lambda;
                if slack <= 0.0 {
                    return Err(Error::Overloaded(format!(
                        "arc of {len} servers from server {} cannot carry {lambda}",
                        a + 1
                    )));
                }
                let mut harmonic = 0.0;
                let mut carried = 0.0;
                for t in 0..len {
                    let split = psi.get(a, t) * psi.get(a + t + 1, len - t - 1);
                    let mu = p.mu[(a + t) % k];
                    harmonic += mu / split;
                    carried += mu * (mean.get(a, t) + mean.get(a + t + 1, len - t - 1)) / split;
                }
                let psi_arc = slack / harmonic;
                psi.set(a, len, psi_arc);
                mean.set(a, len, (lambda + psi_arc * carried) / slack);
            }
        }
        let total_capacity: f64 = p.mu.iter().sum();
        let total_arrivals: f64 = p.classes.iter().map(|c| c.lambda).sum();
        Ok(ArcSolution {
            k,
            mu: p.mu.clone(),
            capacity,
            arrivals,
            psi,
            mean,
            total_capacity,
            total_arrivals,
        })
    }

    /// Whole-ring `ψ` and `L`, conditioning on each idle server in turn.
    fn ring(&self) -> Result<(f64, f64)> {
        let slack = self.total_capacity - self.total_arrivals;
        if self.total_arrivals == 0.0 {
            return Ok((1.0, 0.0));
        }
        if slack <= 0.0 {
            return Err(Error::Overloaded(format!(
                "the ring cannot carry {}",
                self.total_arrivals
            )));
        }
        let k = self.k;
        let mut harmonic = 0.0;
        let mut carried = 0.0;
        for s in 0..k {
            let rest = self.psi.get(s + 1, k - 1);
            harmonic += self.mu[s] / rest;
            carried += self.mu[s] * self.mean.get(s + 1, k - 1) / rest;
        }
        let psi = slack / harmonic;
        Ok((psi, (self.total_arrivals + psi * carried) / slack))
    }

    fn class_mean(&self, p: &RingPool, c: &IntervalClass, psi: f64, table: &mut ArcTable) -> f64 {
        let k = self.k;
        let slack_ring = self.total_capacity - self.total_arrivals;
        if c.lambda == 0.0 {
            return 0.0;
        }
        let m = p.arc_len(c);
        if m == k {
            return c.lambda / slack_ring;
        }
        let start = c.i - 1;
        // arcs containing the class, shortest first
        for len in m..k {
            for shift in 0..=(len - m) {
                let a = (start + k - shift) % k;
                let offset = shift;
                let slack = self.capacity.get(a, len) - self.arrivals.get(a, len);
                let mut carried = 0.0;
                for t in 0..offset {
                    let split = self.psi.get(a, t) * self.psi.get(a + t + 1, len - t - 1);
                    carried += self.mu[(a + t) % k] * table.get(a + t + 1, len - t - 1) / split;
                }
                for t in offset + m..len {
                    let split = self.psi.get(a, t) * self.psi.get(a + t + 1, len - t - 1);
                    carried += self.mu[(a + t) % k] * table.get(a, t) / split;
                }
                table.set(a, len, (c.lambda + self.psi.get(a, len) * carried) / slack);
            }
        }
        // servers outside the arc, each leaving the line k+1..k−1 behind
        let mut carried = 0.0;
        for t in m..k {
            let s = (start + t) % k;
            carried += self.mu[s] * table.get(s + 1, k - 1) / self.psi.get(s + 1, k - 1);
        }
        (c.lambda + psi * carried) / slack_ring
    }
}

/// `ψ`, `L` and the mean job count of every class (in input order), `O(K³)`
/// plus `O(K³)` per class.
pub fn ring_metrics(p: &RingPool) -> Result<StructuredMetrics> {
    p.validate()?;
    let sol = ArcSolution::solve(p)?;
    let (psi, l_total) = sol.ring()?;
    let mut table = ArcTable::new(p.k, 0.0);
    let l_parts = p
        .classes
        .iter()
        .map(|c| sol.class_mean(p, c, psi, &mut table))
        .collect();
    Ok(StructuredMetrics {
        psi,
        l_total,
        l_parts,
    })
}

/// Homogeneous ring: `K` unit-rate servers and one class per arc of `d`
/// consecutive servers, all with the same rate and overall load `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingHomogeneous {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub rho: f64,
}

impl RingHomogeneous {
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

    /// Explicit ring with `K` arcs of length `d`, each at rate `rho`
    /// (a single whole-ring class when `d = K`).
    pub fn to_ring_pool(&self) -> RingPool {
        let classes = if self.d == self.k {
            vec![IntervalClass {
                i: 1,
                j: self.k,
                lambda: self.k as f64 * self.rho,
            }]
        } else {
            (1..=self.k)
                .map(|i| IntervalClass {
                    i,
                    j: (i + self.d - 2) % self.k + 1,
                    lambda: self.rho,
                })
                .collect()
        };
        RingPool {
            k: self.k,
            mu: vec![1.0; self.k],
            classes,
        }
    }
}

/// `ψ = (1 − ρ) ψ_{|1..K−1}` and `L = ρ/(1 − ρ) + L_{|1..K−1}`, where the
/// line `1..K−1` carries load `ρ (1 − (d−1)/(K−1))`. `O(K²)`.
///
/// With `d = K` every arc is the whole ring and the pool is a single M/M/1
/// queue.
pub fn ring_homogeneous_metrics(p: &RingHomogeneous) -> Result<StructuredMetrics> {
    p.validate()?;
    let rho = p.rho;
    if p.d == p.k {
        return Ok(StructuredMetrics {
            psi: 1.0 - rho,
            l_total: rho / (1.0 - rho),
            l_parts: vec![],
        });
    }
    let line = LineHomogeneous {
        k: p.k - 1,
        d: p.d,
        rho: rho * (1.0 - (p.d - 1) as f64 / (p.k - 1) as f64),
    };
    let rest = line_homogeneous_global(&line)?;
    Ok(StructuredMetrics {
        psi: (1.0 - rho) * rest.psi,
        l_total: rho / (1.0 - rho) + rest.l_total,
        l_parts: vec![],
    })
}
