mod common;

use approx::assert_relative_eq;
use bfpool::generic;
use bfpool::structured::*;
use common::*;
use rand::Rng;

fn interval(i: usize, j: usize, lambda: f64) -> IntervalClass {
    IntervalClass { i, j, lambda }
}

#[test]
fn randomized_homogeneous_k6_d2() {
    let s = Structured::RandomizedHomogeneous(RandomizedHomogeneous {
        k: 6,
        mu: 1.0,
        lambda: 0.7,
        d: 2,
    });
    assert_eq!(s.expand(DEFAULT_MAX_EXPANSION).unwrap().class_count(), 15);
    assert!(structured_gap(&s) < 1e-10);
}

#[test]
fn randomized_homogeneous_grid() {
    for k in 1..=7 {
        for d in 1..=k {
            for &rho in &[0.2, 0.6, 0.9] {
                let s = Structured::RandomizedHomogeneous(RandomizedHomogeneous {
                    k,
                    mu: 1.5,
                    lambda: 1.5 * rho,
                    d,
                });
                let gap = structured_gap(&s);
                assert!(gap < 1e-10, "K={k} d={d} rho={rho}: {gap}");
            }
        }
    }
}

#[test]
fn heterogeneous_degrees_random_types() {
    let mut r = rng(21);
    for _ in 0..25 {
        let k = r.gen_range(2..=7);
        let n = r.gen_range(1..=3);
        let weights: Vec<f64> = (0..n).map(|_| r.gen_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let types = weights
            .iter()
            .map(|w| DegreeType {
                p: w / total,
                d: r.gen_range(1..=k),
            })
            .collect();
        let s = Structured::HeterogeneousDegrees(HeterogeneousDegrees {
            k,
            mu: 1.0,
            lambda: r.gen_range(0.1..0.9),
            types,
        });
        let gap = structured_gap(&s);
        assert!(gap < 1e-10, "{s:?}: {gap}");
    }
}

#[test]
fn heterogeneous_degrees_hand_example() {
    let p = HeterogeneousDegrees {
        k: 2,
        mu: 1.0,
        lambda: 0.5,
        types: vec![DegreeType { p: 0.5, d: 1 }, DegreeType { p: 0.5, d: 2 }],
    };
    let r = heterogeneous_degrees_metrics(&p).unwrap();
    assert_relative_eq!(r.psi, 0.375, max_relative = 1e-14);
    assert_relative_eq!(
        r.l_parts.iter().sum::<f64>(),
        r.l_total,
        max_relative = 1e-12
    );
    assert!(structured_gap(&Structured::HeterogeneousDegrees(p)) < 1e-10);
}

#[test]
fn heterogeneous_groups_example() {
    let s = Structured::HeterogeneousGroups(HeterogeneousGroups {
        groups: vec![ServerGroup { k: 2, mu: 1.0 }, ServerGroup { k: 2, mu: 2.0 }],
        // rho = 0.5 on a total capacity of 6 over 4 servers
        lambda: 0.75,
        types: vec![
            GroupType {
                p: 0.5,
                d: vec![1, 0],
            },
            GroupType {
                p: 0.5,
                d: vec![1, 1],
            },
        ],
    });
    assert!(structured_gap(&s) < 1e-10);
}

#[test]
fn heterogeneous_groups_grid() {
    let mut r = rng(5);
    for k1 in 1..=3 {
        for k2 in 1..=3 {
            let types: Vec<GroupType> = (0..2)
                .map(|_| {
                    let mut d = vec![r.gen_range(0..=k1), r.gen_range(0..=k2)];
                    if d == [0, 0] {
                        d[0] = 1;
                    }
                    GroupType { p: 0.5, d }
                })
                .collect();
            let s = Structured::HeterogeneousGroups(HeterogeneousGroups {
                groups: vec![
                    ServerGroup { k: k1, mu: 1.0 },
                    ServerGroup { k: k2, mu: 0.5 },
                ],
                lambda: 0.2,
                types,
            });
            let gap = structured_gap(&s);
            assert!(gap < 1e-10, "{s:?}: {gap}");
        }
    }
}

fn nested_five_servers() -> bfpool::RawModel {
    let m = pool(
        &[1.0; 5],
        &[
            (0.1, vec![1, 2, 3, 4, 5]),
            (0.1, vec![1, 2, 3]),
            (0.1, vec![1]),
            (0.1, vec![2, 3]),
            (0.1, vec![4]),
        ],
    );
    m.to_raw()
}

#[test]
fn nested_five_server_tree() {
    let raw = nested_five_servers();
    let model = bfpool::PoolModel::validate(&raw).unwrap();
    let NestedBuild::Nested(tree) = nested_tree_build(&model) else {
        panic!("nested")
    };
    let psi = tree.empty_probability().unwrap();
    assert_relative_eq!(
        psi,
        generic::empty_probability(&model).unwrap(),
        max_relative = 1e-12
    );
    assert!(structured_gap(&Structured::Nested(raw)) < 1e-10);
    // nested pools are line pools
    let line = line_metrics(&tree.to_line_pool()).unwrap();
    assert_relative_eq!(line.psi, psi, max_relative = 1e-12);
}

#[test]
fn nested_witness_pair() {
    let m = pool(&[1.0; 5], &[(0.1, vec![1, 2, 3]), (0.1, vec![2, 3, 4, 5])]);
    assert_eq!(nested_tree_build(&m), NestedBuild::NotNested(1, 2));
}

#[test]
fn line_five_server_example() {
    let p = LinePool {
        k: 5,
        mu: vec![1.0; 5],
        classes: vec![
            interval(1, 2, 0.2),
            interval(4, 5, 0.2),
            interval(1, 3, 0.2),
            interval(2, 5, 0.2),
        ],
    };
    let model = Structured::Line(p.clone())
        .expand(DEFAULT_MAX_EXPANSION)
        .unwrap();
    assert_relative_eq!(
        line_metrics(&p).unwrap().psi,
        generic::empty_probability(&model).unwrap(),
        max_relative = 1e-12
    );
    assert!(structured_gap(&Structured::Line(p)) < 1e-10);
}

#[test]
fn line_random_intervals() {
    let mut r = rng(8);
    for _ in 0..20 {
        let k = r.gen_range(1..=7);
        let classes = (0..r.gen_range(1..=6))
            .map(|_| {
                let i = r.gen_range(1..=k);
                interval(i, r.gen_range(i..=k), r.gen_range(0.0..0.3))
            })
            .collect();
        let mu = (0..k).map(|_| r.gen_range(0.5..1.5)).collect();
        let raw = Structured::Line(LinePool { k, mu, classes });
        // skip draws close to saturation
        let model = raw.expand(DEFAULT_MAX_EXPANSION).unwrap();
        if critical_load(&model.to_raw()) >= 0.95 {
            continue;
        }
        let gap = structured_gap(&raw);
        assert!(gap < 1e-10, "{raw:?}: {gap}");
    }
}

#[test]
fn line_homogeneous_k6_d3() {
    let h = LineHomogeneous {
        k: 6,
        d: 3,
        rho: 0.5,
    };
    assert_eq!(h.class_count(), 4);
    let a = line_homogeneous_metrics(&h).unwrap();
    let b = line_metrics(&h.to_line_pool()).unwrap();
    assert_relative_eq!(a.psi, b.psi, max_relative = 1e-12);
    assert_relative_eq!(a.l_total, b.l_total, max_relative = 1e-12);
    for (x, y) in a.l_parts.iter().zip(&b.l_parts) {
        assert_relative_eq!(x, y, max_relative = 1e-12);
    }
    assert!(structured_gap(&Structured::LineHomogeneous(h)) < 1e-10);
}

#[test]
fn ring_wrapping_arcs() {
    let p = RingPool {
        k: 5,
        mu: vec![1.0; 5],
        classes: vec![
            interval(2, 3, 0.2),
            interval(3, 1, 0.2),
            interval(5, 2, 0.2),
        ],
    };
    let model = Structured::Ring(p.clone())
        .expand(DEFAULT_MAX_EXPANSION)
        .unwrap();
    assert_eq!(model.classes()[1].servers, vec![1, 3, 4, 5]);
    assert_relative_eq!(
        ring_metrics(&p).unwrap().psi,
        generic::empty_probability(&model).unwrap(),
        max_relative = 1e-12
    );
    assert!(structured_gap(&Structured::Ring(p)) < 1e-10);
}

#[test]
fn ring_k3_equals_global() {
    let ring = RingHomogeneous {
        k: 3,
        d: 2,
        rho: 0.5,
    };
    let a = ring_metrics(&ring.to_ring_pool()).unwrap();
    let b = randomized_homogeneous_metrics(&RandomizedHomogeneous {
        k: 3,
        mu: 1.0,
        lambda: 0.5,
        d: 2,
    })
    .unwrap();
    assert_relative_eq!(a.psi, b.psi, max_relative = 1e-12);
    assert_relative_eq!(a.l_total, b.l_total, max_relative = 1e-12);
    let h = ring_homogeneous_metrics(&ring).unwrap();
    assert_relative_eq!(h.psi, 0.375, max_relative = 1e-14);
    assert_relative_eq!(h.l_total, 4.0 / 3.0, max_relative = 1e-14);
}

#[test]
fn ring_homogeneous_k100_matches_arc_recursion() {
    let h = RingHomogeneous {
        k: 100,
        d: 10,
        rho: 0.9,
    };
    let a = ring_homogeneous_metrics(&h).unwrap();
    let b = ring_metrics(&h.to_ring_pool()).unwrap();
    assert_relative_eq!(a.psi, b.psi, max_relative = 1e-10);
    assert_relative_eq!(a.l_total, b.l_total, max_relative = 1e-10);
}

#[test]
fn ring_homogeneous_small_grid() {
    for k in 2..=7 {
        for d in 1..=k {
            let s = Structured::RingHomogeneous(RingHomogeneous { k, d, rho: 0.7 });
            let gap = structured_gap(&s);
            assert!(gap < 1e-10, "K={k} d={d}: {gap}");
        }
    }
}

#[test]
fn mean_jobs_nonincreasing_in_degree() {
    for k in [5, 20, 100] {
        for &rho in &[0.3, 0.7, 0.95] {
            let mut last = f64::INFINITY;
            for d in 1..=k {
                let l = randomized_homogeneous_metrics(&RandomizedHomogeneous {
                    k,
                    mu: 1.0,
                    lambda: rho,
                    d,
                })
                .unwrap()
                .l_total;
                assert!(l <= last * (1.0 + 1e-12), "K={k} rho={rho} d={d}");
                last = l;
            }
        }
    }
}

#[test]
fn per_type_means_sum_to_total() {
    let p = HeterogeneousDegrees {
        k: 50,
        mu: 2.0,
        lambda: 1.5,
        types: vec![
            DegreeType { p: 0.2, d: 1 },
            DegreeType { p: 0.5, d: 5 },
            DegreeType { p: 0.3, d: 20 },
        ],
    };
    let r = heterogeneous_degrees_metrics(&p).unwrap();
    assert_relative_eq!(
        r.l_parts.iter().sum::<f64>(),
        r.l_total,
        max_relative = 1e-10
    );
    let g = heterogeneous_groups_metrics(&HeterogeneousGroups {
        groups: vec![ServerGroup { k: 6, mu: 1.0 }, ServerGroup { k: 4, mu: 3.0 }],
        lambda: 0.9,
        types: vec![
            GroupType {
                p: 0.4,
                d: vec![2, 1],
            },
            GroupType {
                p: 0.6,
                d: vec![0, 3],
            },
        ],
    })
    .unwrap();
    assert_relative_eq!(
        g.l_parts.iter().sum::<f64>(),
        g.l_total,
        max_relative = 1e-10
    );
}
