#![allow(dead_code)]

use bfpool::document::ModelDocument;
use bfpool::generic::SolverConfig;
use bfpool::report::{analyze, SolverChoice};
use bfpool::structured::Structured;
use bfpool::{PoolModel, RawModel};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub fn pool(mu: &[f64], classes: &[(f64, Vec<usize>)]) -> PoolModel {
    PoolModel::validate(&RawModel::from_rates(mu, classes)).unwrap()
}

pub fn m_model() -> PoolModel {
    pool(&[1.0, 1.0, 1.0], &[(1.0, vec![1, 3]), (1.0, vec![2, 3])])
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Server subsets as plain `Vec<usize>` lists, built without bit tricks.
pub fn all_server_subsets(k: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for s in 1..=k {
        let mut more = Vec::new();
        for subset in &out {
            let mut with = subset.clone();
            with.push(s);
            more.push(with);
        }
        out.extend(more);
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Largest `Λ(L) / M(L)` over server subsets `L`, where `Λ(L)` counts the
/// classes whose server sets lie inside `L`.
pub fn critical_load(raw: &RawModel) -> f64 {
    let k = raw.servers.len();
    all_server_subsets(k)
        .iter()
        .map(|subset| {
            let m: f64 = subset.iter().map(|&s| raw.servers[s - 1].mu).sum();
            let l: f64 = raw
                .classes
                .iter()
                .filter(|c| c.servers.iter().all(|s| subset.contains(s)))
                .map(|c| c.lambda)
                .sum();
            l / m
        })
        .fold(0.0, f64::max)
}

/// Random pool with `k` servers and `i` classes; every server is used.
pub fn random_raw(rng: &mut Pcg64, k: usize, i: usize) -> RawModel {
    let mu: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mut classes: Vec<(f64, Vec<usize>)> = (0..i)
        .map(|_| {
            let mut set: Vec<usize> = (1..=k).filter(|_| rng.gen_bool(0.4)).collect();
            if set.is_empty() {
                set.push(rng.gen_range(1..=k));
            }
            (rng.gen_range(0.05..1.0), set)
        })
        .collect();
    for s in 1..=k {
        if !classes.iter().any(|(_, set)| set.contains(&s)) {
            let c = rng.gen_range(0..classes.len());
            classes[c].1.push(s);
            classes[c].1.sort_unstable();
        }
    }
    RawModel::from_rates(&mu, &classes)
}

/// Scales arrivals so that the most loaded subset runs at `target`.
pub fn with_critical_load(raw: &RawModel, target: f64) -> RawModel {
    let factor = target / critical_load(raw);
    let mut out = raw.clone();
    for c in &mut out.classes {
        c.lambda *= factor;
    }
    out
}

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

/// Largest relative gap between the structured solver and the generic
/// solver on the expansion, over ψ, L and every part.
pub fn structured_gap(s: &Structured) -> f64 {
    let doc = ModelDocument::Structured(s.clone());
    let a = analyze(&doc, SolverChoice::Structured, SolverConfig::default()).unwrap();
    let b = analyze(&doc, SolverChoice::Generic, SolverConfig::default()).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
    let mut gap = rel(a.psi, b.psi).max(rel(a.l_total, b.l_total));
    match (&a.parts, &b.parts) {
        (Some(pa), Some(pb)) => {
            assert_eq!(pa.l.len(), pb.l.len());
            for (x, y) in pa.l.iter().zip(&pb.l) {
                gap = gap.max(rel(*x, *y));
            }
        }
        (None, None) => {}
        _ => panic!("part reports differ in shape"),
    }
    gap
}
