mod common;

use gnnfair::aggregate::{aggregate, aggregate_matrix, row_operator_checksum, AggregationSpec};
use gnnfair::graph::{load_bundle, save_bundle, CsrAdjacency, GraphBundle};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn graph_strategy(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_nodes).prop_flat_map(|n| {
        let pairs = prop::collection::vec((0..n, 0..n), 0..3 * n);
        (Just(n), pairs.prop_map(|v| v.into_iter().filter(|(a, b)| a != b).collect()))
    })
}

fn bundle_strategy() -> impl Strategy<Value = GraphBundle> {
    graph_strategy(25).prop_flat_map(|(n, edges)| {
        let feats = prop::collection::vec(-1e6f64..1e6, n * 3);
        let labels = prop::collection::vec(0usize..3, n);
        (Just(n), Just(edges), feats, labels).prop_map(|(n, edges, f, y)| {
            GraphBundle::new("prop", n, edges, Array2::from_shape_vec((n, 3), f).unwrap(), y, 3).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csr_is_symmetric_with_sorted_rows((n, edges) in graph_strategy(30)) {
        let adj = CsrAdjacency::from_edges(n, &edges);
        for i in 0..n {
            let row = adj.neighbors(i);
            prop_assert_eq!(row.len(), adj.degree()[i]);
            prop_assert!(row.windows(2).all(|w| w[0] < w[1]));
            for &j in row {
                prop_assert!(adj.neighbors(j).contains(&i));
            }
        }
        prop_assert!(adj.offsets().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bundle_round_trips(bundle in bundle_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&bundle, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        prop_assert_eq!(back.num_nodes(), bundle.num_nodes());
        prop_assert_eq!(back.num_classes(), bundle.num_classes());
        prop_assert_eq!(back.edges(), bundle.edges());
        prop_assert_eq!(back.labels(), bundle.labels());
        for (a, b) in back.features().iter().zip(bundle.features().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn two_step_matches_dense_oracle((n, edges) in graph_strategy(30), seed in any::<u64>()) {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((seed >> (i % 60)) as f64 % 97.0) - 13.0 * j as f64);
        let adj = CsrAdjacency::from_edges(n, &edges);
        let canon: Vec<_> = GraphBundle::new("g", n, edges.clone(), x.clone(), vec![0; n], 2).unwrap().edges().to_vec();
        let p = common::dense_operator(n, &canon);
        let dense = p.dot(&p).dot(&x);
        let z = aggregate_matrix(&x, &adj, AggregationSpec::TwoStepNorm);
        for (a, b) in z.matrix().iter().zip(dense.iter()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for s in row_operator_checksum(&adj) {
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn aggregation_stays_within_column_range(bundle in bundle_strategy()) {
        let adj = bundle.to_csr();
        let x = bundle.features();
        for spec in [AggregationSpec::OneStepMean, AggregationSpec::TwoStepNorm] {
            let z = aggregate(&bundle, &adj, spec);
            prop_assert_eq!(z.matrix().dim(), x.dim());
            for d in 0..x.ncols() {
                let col = x.column(d);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-9 * hi.abs().max(lo.abs()).max(1.0);
                for &v in z.matrix().column(d) {
                    prop_assert!(v >= lo - slack && v <= hi + slack);
                }
            }
        }
    }

    #[test]
    fn aggregation_is_permutation_equivariant(bundle in bundle_strategy(), shift in 0usize..1000) {
        let n = bundle.num_nodes();
        // perm[i] is the new id of node i: a rotation composed with reversal.
        let perm: Vec<usize> = (0..n).map(|i| n - 1 - (i + shift) % n).collect();
        let edges: Vec<_> = bundle.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut x = Array2::zeros(bundle.features().raw_dim());
        for (i, &pi) in perm.iter().enumerate() {
            x.row_mut(pi).assign(&bundle.features().row(i));
        }
        let z = aggregate_matrix(bundle.features(), &bundle.to_csr(), AggregationSpec::TwoStepNorm);
        let zp = aggregate_matrix(&x, &CsrAdjacency::from_edges(n, &edges), AggregationSpec::TwoStepNorm);
        for (i, &pi) in perm.iter().enumerate() {
            for d in 0..x.ncols() {
                let (a, b) = (z.matrix()[[i, d]], zp.matrix()[[pi, d]]);
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}

#[test]
fn worked_two_step_example() {
    let x = array![[1.0], [0.0], [2.0]];
    let adj = CsrAdjacency::from_edges(3, &[(0, 1)]);
    let z = aggregate_matrix(&x, &adj, AggregationSpec::TwoStepNorm);
    assert_eq!(z.matrix(), &array![[0.5], [0.5], [2.0]]);
    assert_eq!(aggregate_matrix(&x, &adj, AggregationSpec::Identity).matrix(), &x);
    assert_eq!(z.row_norms().to_vec(), vec![0.5, 0.5, 2.0]);
}

#[test]
fn duplicate_and_reversed_edges_merge() {
    let b = GraphBundle::new("d", 3, vec![(0, 1), (1, 0), (0, 1), (2, 1)], Array2::zeros((3, 1)), vec![0, 1, 0], 2).unwrap();
    assert_eq!(b.edges(), &[(0, 1), (1, 2)]);
    assert_eq!(b.to_csr().degree(), &[1, 2, 1]);
}

#[test]
fn invalid_bundles_are_rejected() {
    let x = Array2::zeros((2, 1));
    assert!(GraphBundle::new("s", 2, vec![(1, 1)], x.clone(), vec![0, 1], 2).is_err());
    assert!(GraphBundle::new("l", 2, vec![], x.clone(), vec![0, 2], 2).is_err());
    assert!(GraphBundle::new("k", 2, vec![], x.clone(), vec![0, 0], 1).is_err());
    assert!(GraphBundle::new("r", 3, vec![], x.clone(), vec![0, 0, 1], 2).is_err());
    let nan = Array2::from_elem((2, 1), f64::NAN);
    assert!(GraphBundle::new("n", 2, vec![], nan, vec![0, 1], 2).is_err());
}
