mod common;

use bfpool::generic::{self, GenericSolver, SolverConfig};
use bfpool::oracle::truncated_stationary_metrics;
use bfpool::{Error, PoolModel, RawModel};
use common::*;
use proptest::prelude::*;

/// Pools with at most `max_k` servers and `max_i` classes, loaded so that the
/// busiest subset sits at a load drawn from `load`.
fn stable_pool(
    max_k: usize,
    max_i: usize,
    load: std::ops::Range<f64>,
) -> impl Strategy<Value = RawModel> {
    (1..=max_k, 1..=max_i, any::<u64>(), load).prop_map(|(k, i, seed, target)| {
        with_critical_load(&random_raw(&mut rng(seed), k, i), target)
    })
}

fn model(raw: &RawModel) -> PoolModel {
    PoolModel::validate(raw).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conservation(raw in stable_pool(6, 5, 0.05..0.97)) {
        let m = model(&raw);
        let psi_k = generic::server_idle_probabilities(&m).unwrap();
        let served: f64 = m.servers().iter().zip(&psi_k).map(|(s, p)| s.mu * p).sum();
        let (cap, arr) = m.aggregate_rates();
        prop_assert!(rel_close(served, cap - arr, 1e-10), "{served} vs {}", cap - arr);
    }

    #[test]
    fn class_means_add_up(raw in stable_pool(6, 5, 0.05..0.97)) {
        let l = generic::mean_jobs(&model(&raw)).unwrap();
        prop_assert!(rel_close(l.per_class.iter().sum(), l.total, 1e-10));
    }

    #[test]
    fn factorization_against_reduced_pool(raw in stable_pool(6, 5, 0.05..0.9)) {
        let m = model(&raw);
        let psi = generic::empty_probability(&m).unwrap();
        let psi_k = generic::server_idle_probabilities(&m).unwrap();
        for k in 1..=m.server_count() {
            let reduced = m.remove_server(k).unwrap();
            let rest = if reduced.kept_classes.is_empty() {
                1.0
            } else {
                generic::empty_probability(&reduced.to_model()).unwrap()
            };
            prop_assert!(rel_close(psi, psi_k[k - 1] * rest, 1e-10));
        }
    }

    #[test]
    fn mean_lower_bounds(raw in stable_pool(6, 5, 0.05..0.97)) {
        let m = model(&raw);
        let r = generic::performance_report(&m).unwrap();
        prop_assert!(r.l_total >= r.rho / (1.0 - r.rho) * (1.0 - 1e-12));
        for (l, rho) in r.l_class.iter().zip(&r.rho_class) {
            prop_assert!(*l >= rho / (1.0 - rho) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn relabeling_permutes_report(raw in stable_pool(5, 4, 0.05..0.9), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut r = rng(seed);
        let k = raw.servers.len();
        let mut server_perm: Vec<usize> = (1..=k).collect();
        server_perm.shuffle(&mut r);
        let mut class_perm: Vec<usize> = (0..raw.classes.len()).collect();
        class_perm.shuffle(&mut r);
        // server s becomes server_perm[s - 1]; class at position p moves to position class_perm[p]
        let mut mu = vec![0.0; k];
        for s in 0..k {
            mu[server_perm[s] - 1] = raw.servers[s].mu;
        }
        let mut classes = vec![(0.0, vec![]); raw.classes.len()];
        for (p, c) in raw.classes.iter().enumerate() {
            classes[class_perm[p]] = (c.lambda, c.servers.iter().map(|&s| server_perm[s - 1]).collect());
        }
        let a = generic::performance_report(&model(&raw)).unwrap();
        let b = generic::performance_report(&pool(&mu, &classes)).unwrap();
        prop_assert!(rel_close(a.psi, b.psi, 1e-10));
        prop_assert!(rel_close(a.l_total, b.l_total, 1e-10));
        for s in 0..k {
            prop_assert!(rel_close(a.psi_server[s], b.psi_server[server_perm[s] - 1], 1e-10));
        }
        for p in 0..raw.classes.len() {
            prop_assert!(rel_close(a.l_class[p], b.l_class[class_perm[p]], 1e-10));
            prop_assert!(rel_close(a.psi_class[p], b.psi_class[class_perm[p]], 1e-10));
        }
    }

    #[test]
    fn psi_nonincreasing_in_arrivals(raw in stable_pool(5, 4, 0.05..0.85), pick in any::<usize>()) {
        let m = model(&raw);
        let base = generic::empty_probability(&m).unwrap();
        let mut more = raw.clone();
        let c = pick % more.classes.len();
        more.classes[c].lambda *= 1.05;
        let bumped = generic::empty_probability(&model(&more)).unwrap();
        prop_assert!(bumped <= base * (1.0 + 1e-12));
    }

    #[test]
    fn truncation_brackets_exact_values(raw in stable_pool(4, 3, 0.05..0.6)) {
        let m = model(&raw);
        let t = truncated_stationary_metrics(&m, 60).unwrap();
        let r = generic::performance_report(&m).unwrap();
        let slack = |x: f64| 1e-12 * x.abs();
        prop_assert!((t.psi.value - r.psi).abs() <= t.psi.error_bound + slack(r.psi));
        prop_assert!((t.l_total.value - r.l_total).abs() <= t.l_total.error_bound + slack(r.l_total));
        // partial sums under-estimate the normalizing constant
        prop_assert!(t.psi.value >= r.psi * (1.0 - 1e-12));
    }

    #[test]
    fn instability_matches_subset_enumeration(raw in stable_pool(6, 5, 0.5..1.5)) {
        let critical = critical_load(&raw);
        let result = GenericSolver::new(&model(&raw), SolverConfig::default())
            .and_then(|mut s| s.empty_probability());
        match result {
            Ok(_) => prop_assert!(critical < 1.0),
            Err(Error::UnstableModel { witness }) => {
                prop_assert!(critical >= 1.0 - 1e-12);
                let m: f64 = witness.iter().map(|&s| raw.servers[s - 1].mu).sum();
                let l: f64 = raw.classes.iter()
                    .filter(|c| c.servers.iter().all(|s| witness.contains(s)))
                    .map(|c| c.lambda)
                    .sum();
                prop_assert!(l >= m * (1.0 - 1e-12));
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
