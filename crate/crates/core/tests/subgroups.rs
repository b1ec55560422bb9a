mod common;

use std::collections::BTreeSet;

use gnnfair::aggregate::{AggregatedFeatures, AggregationSpec};
use gnnfair::graph::CsrAdjacency;
use gnnfair::subgroup::{
    agg_distance_scores, build_near_sets, centrality_scores, geodesic_scores, split_into_groups, CentralityKind,
    SortOrder,
};
use ndarray::Array2;
use proptest::prelude::*;

fn scores_strategy() -> impl Strategy<Value = (Vec<(usize, f64)>, usize)> {
    prop::collection::vec(-100.0f64..100.0, 1..80).prop_flat_map(|vals| {
        let n = vals.len();
        let scored: Vec<(usize, f64)> = vals.into_iter().enumerate().map(|(i, v)| (3 * i + 1, v.round())).collect();
        (Just(scored), 1..=n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn partitions_are_balanced_and_ordered((scored, m) in scores_strategy(), desc in any::<bool>()) {
        let scores = scored.iter().copied().collect();
        let order = if desc { SortOrder::Descending } else { SortOrder::Ascending };
        let groups = split_into_groups(&scores, m, order).unwrap();
        prop_assert_eq!(groups.len(), m);
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let all: BTreeSet<usize> = groups.iter().flatten().copied().collect();
        prop_assert_eq!(all.len(), scored.len());
        prop_assert_eq!(all, scored.iter().map(|p| p.0).collect::<BTreeSet<_>>());
        for w in groups.windows(2) {
            for &a in &w[0] {
                for &b in &w[1] {
                    let (sa, sb) = (scores[&a], scores[&b]);
                    let before = if desc { sa > sb } else { sa < sb };
                    prop_assert!(before || (sa == sb && a < b));
                }
            }
        }
    }

    #[test]
    fn strictly_increasing_relabel_keeps_partition((scored, m) in scores_strategy()) {
        let scores = scored.iter().copied().collect();
        let warped = scored.iter().map(|&(k, v)| (k, (v / 50.0).exp() * 3.0 + 1.0)).collect();
        prop_assert_eq!(
            split_into_groups(&scores, m, SortOrder::Ascending).unwrap(),
            split_into_groups(&warped, m, SortOrder::Ascending).unwrap()
        );
    }

    #[test]
    fn epsilon_shrinks_as_training_set_grows(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6..40),
        k in 1usize..4,
    ) {
        let n = pts.len();
        let z = AggregatedFeatures::new(
            Array2::from_shape_fn((n, 2), |(i, d)| if d == 0 { pts[i].0 } else { pts[i].1 }),
            AggregationSpec::Identity,
        );
        let test: Vec<usize> = (n / 2..n).collect();
        let small: Vec<usize> = (0..k.min(n / 2)).collect();
        let big: Vec<usize> = (0..n / 2).collect();
        let a = build_near_sets(&z, &small, &test).unwrap();
        let b = build_near_sets(&z, &big, &test).unwrap();
        prop_assert!(b.epsilon_m <= a.epsilon_m);
        let covered: BTreeSet<usize> = b.near_sets.values().flatten().copied().collect();
        prop_assert_eq!(covered, test.iter().copied().collect::<BTreeSet<_>>());
        let d = agg_distance_scores(&z, &big, &test).unwrap();
        let max = d.values().copied().fold(0.0, f64::max);
        prop_assert_eq!(max, b.epsilon_m);
    }
}

#[test]
fn centralities_match_brute_force() {
    for seed in 0..40 {
        let (n, edges) = common::random_graph(500 + seed, 35);
        let adj = CsrAdjacency::from_edges(n, &edges);
        let check = |kind, oracle: Vec<f64>, tol: f64| {
            let s = centrality_scores(&adj, kind).unwrap();
            for (i, o) in oracle.iter().enumerate() {
                assert!((s[&i] - o).abs() <= tol, "{kind:?} node {i}: {} vs {o}", s[&i]);
            }
        };
        check(CentralityKind::Betweenness, common::betweenness_enumeration(n, &edges), 1e-9);
        check(CentralityKind::Closeness, common::harmonic_closeness(n, &edges), 1e-9);
        check(CentralityKind::Degree, common::degrees(n, &edges), 0.0);
        check(CentralityKind::Pagerank, common::pagerank_dense(n, &edges), 1e-9);
        check(CentralityKind::Pagerank, common::pagerank_exact(n, &edges), 1e-6);
    }
}

#[test]
fn star_centralities() {
    let edges: Vec<_> = (1..5).map(|i| (0, i)).collect();
    let adj = CsrAdjacency::from_edges(5, &edges);
    let bc = centrality_scores(&adj, CentralityKind::Betweenness).unwrap();
    assert_eq!(bc[&0], 6.0);
    let cl = centrality_scores(&adj, CentralityKind::Closeness).unwrap();
    assert_eq!(cl[&0], 4.0);
    assert_eq!(cl[&1], 1.0 + 3.0 * 0.5);
}

#[test]
fn geodesic_scores_use_nearest_source_and_flag_unreachable() {
    let adj = CsrAdjacency::from_edges(6, &[(0, 1), (1, 2), (2, 3), (4, 3)]);
    let s = geodesic_scores(&adj, &[0, 4], &[1, 2, 3, 5]);
    assert_eq!((s[&1], s[&2], s[&3]), (1.0, 2.0, 1.0));
    assert!(s[&5].is_infinite());
}

#[test]
fn near_set_ties_go_to_the_smaller_train_id() {
    let z = AggregatedFeatures::new(ndarray::array![[0.0], [2.0], [1.0]], AggregationSpec::Identity);
    let ns = build_near_sets(&z, &[1, 0], &[2]).unwrap();
    assert_eq!(ns.near_sets[&0], vec![2]);
    assert!(ns.near_sets[&1].is_empty());
    assert!(!ns.assumption2_holds);
    assert_eq!(ns.epsilon_m, 1.0);
}

#[test]
fn jacobi_oracle_self_check() {
    let w = ndarray::array![[3.0, 0.0], [4.0, 5.0]];
    // W^T W = [[25, 20], [20, 25]] has eigenvalues 45 and 5.
    assert!((common::spectral_norm_jacobi(&w) - 45f64.sqrt()).abs() < 1e-12);
}
