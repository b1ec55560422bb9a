use std::collections::HashSet;

use gnnfair::harness::{
    disparity_csv, noisy_features, run_biased_selection, run_disparity, run_noisy, run_noisy_with, sample_split,
    spearman, ModelKind, NoiseSource, TrialPlan,
};
use gnnfair::subgroup::{build_near_sets, CentralityKind, SplitKind};
use gnnfair::synth::{
    gen_assumption_world, gen_homophilous, load_world, measured_lipschitz, sample_labels, save_world,
    HomophilyConfig, LabelField, WorldConfig, WorldLayout,
};
use gnnfair::train::TrainConfig;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_bundle() -> gnnfair::graph::GraphBundle {
    gen_homophilous(&HomophilyConfig {
        n_per_class: 60,
        num_classes: 3,
        dim: 6,
        intra_p: 0.1,
        inter_p: 0.01,
        ..HomophilyConfig::default()
    })
    .unwrap()
}

fn quick_plan(model: ModelKind) -> TrialPlan {
    TrialPlan {
        trials: 4,
        groups: 3,
        train_per_class: 10,
        val_count: 30,
        test_count: 60,
        train: TrainConfig { max_epochs: 60, patience: 20, ..TrainConfig::default() },
        ..TrialPlan::new(model)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn worlds_satisfy_the_near_set_assumptions(
        n_0 in 1usize..8, s_m in 1usize..5, dim in 1usize..4, eps in 0.05f64..1.0,
        c in 0.0f64..2.0, k in 2usize..4, scattered in any::<bool>(), seed in 0u64..1000,
    ) {
        let world = gen_assumption_world(&WorldConfig {
            n_0, s_m, dim, epsilon_m: eps, c, num_classes: k, spread: 3.0 * eps + 1.0,
            layout: if scattered { WorldLayout::Scattered } else { WorldLayout::Line }, seed,
        }).unwrap();
        let ns = build_near_sets(&world.z, &world.train, &world.test).unwrap();
        prop_assert!(ns.assumption2_holds);
        prop_assert_eq!(ns.s_m, Some(s_m));
        prop_assert!((ns.epsilon_m - eps).abs() < 1e-9);
        for (i, &t) in world.train.iter().enumerate() {
            let expect: Vec<usize> = (n_0 + i * s_m..n_0 + (i + 1) * s_m).collect();
            prop_assert_eq!(&ns.near_sets[&t], &expect);
        }
        let measured = measured_lipschitz(world.z.matrix().view(), world.eta.eta());
        prop_assert!(measured <= c + 1e-9);
        prop_assert!((measured - world.eta.lipschitz_c()).abs() < 1e-12);
    }

    #[test]
    fn splits_are_disjoint_and_sized(seed in any::<u64>()) {
        let bundle = small_bundle();
        let plan = quick_plan(ModelKind::SgcForm);
        let split = sample_split(&bundle, &plan, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(split.train.len(), 30);
        prop_assert_eq!(split.val.len(), 30);
        prop_assert_eq!(split.test.len(), 60);
        let all: HashSet<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        prop_assert_eq!(all.len(), 120);
        for k in 0..3 {
            prop_assert_eq!(split.train.iter().filter(|&&i| bundle.labels()[i] == k).count(), 10);
        }
    }

    #[test]
    fn spearman_is_symmetric_and_bounded(
        pairs in prop::collection::vec((-10i32..10, -10i32..10), 2..30),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let a = spearman(&x, &y);
        prop_assert_eq!(a, spearman(&y, &x));
        if let Some(r) = a {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
        if x.iter().any(|&v| v != x[0]) {
            let r = spearman(&x, &x).unwrap();
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn line_world_matches_the_worked_example() {
    let w = gen_assumption_world(&WorldConfig::default()).unwrap();
    assert_eq!(w.z.matrix(), &array![[0.0, 0.0], [10.0, 0.0], [1.0, 0.0], [9.0, 0.0]]);
    assert_eq!((w.train.clone(), w.test.clone()), (vec![0, 1], vec![2, 3]));
    assert!(gen_assumption_world(&WorldConfig { spread: 2.0, ..WorldConfig::default() }).is_err());
    let dir = tempfile::tempdir().unwrap();
    save_world(&w, dir.path()).unwrap();
    let back = load_world(dir.path()).unwrap();
    assert_eq!(back.z.matrix(), w.z.matrix());
    assert_eq!(back.eta.eta(), w.eta.eta());
    assert_eq!(back.bundle.labels(), w.bundle.labels());
}

#[test]
fn label_frequencies_follow_eta() {
    let eta = Array2::from_shape_fn((2000, 3), |(i, k)| if i % 2 == 0 { [0.2, 0.3, 0.5][k] } else { [0.6, 0.4, 0.0][k] });
    let field = LabelField::new(eta, 0.0).unwrap();
    let labels = sample_labels(&field, 11);
    for (parity, probs) in [(0, [0.2, 0.3, 0.5]), (1, [0.6, 0.4, 0.0])] {
        let rows: Vec<usize> = labels.iter().skip(parity).step_by(2).copied().collect();
        let n = rows.len() as f64;
        for (k, p) in probs.iter().enumerate() {
            let f = rows.iter().filter(|&&y| y == k).count() as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((f - p).abs() <= 3.0 * se + 1e-12, "class {k}: {f} vs {p}");
        }
    }
    assert_eq!(labels, sample_labels(&field, 11));
}

#[test]
fn generators_are_bit_deterministic() {
    let cfg = HomophilyConfig::community_benchmark(3);
    let (a, b) = (gen_homophilous(&cfg).unwrap(), gen_homophilous(&cfg).unwrap());
    assert_eq!(a.edges(), b.edges());
    assert_eq!(a.features(), b.features());
    let c = gen_homophilous(&HomophilyConfig::community_benchmark(4)).unwrap();
    assert_ne!(a.edges(), c.edges());
    let mut ratio_in = 0;
    for &(u, v) in a.edges() {
        ratio_in += usize::from(a.labels()[u] == a.labels()[v]);
    }
    assert!(ratio_in as f64 > 0.8 * a.edges().len() as f64);
}

#[test]
fn disparity_reports_are_reproducible() {
    let bundle = small_bundle();
    let plan = quick_plan(ModelKind::SgcForm);
    let a = run_disparity(&bundle, &plan).unwrap();
    let b = run_disparity(&bundle, &plan).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.group_sizes, vec![20, 20, 20]);
    assert_eq!(a.per_trial.len(), 4);
    assert_eq!(disparity_csv(&a).lines().count(), 1 + 4 * 3);
    let geo = run_disparity(&bundle, &TrialPlan { split: SplitKind::Geodesic, ..plan }).unwrap();
    assert_eq!(geo.split, SplitKind::Geodesic);
}

#[test]
fn noisy_arms_share_splits() {
    let bundle = small_bundle();
    let plan = quick_plan(ModelKind::Mlp);
    let same = run_noisy(&bundle, &plan, 0.0).unwrap();
    assert_eq!(same.clean, same.noisy);
    let r = run_noisy(&bundle, &plan, 5.0).unwrap();
    assert_eq!(r.clean.per_trial.len(), r.noisy.per_trial.len());
    for (c, n) in r.clean.per_trial.iter().zip(&r.noisy.per_trial) {
        assert_eq!(c.seed, n.seed);
        assert_eq!(c.groups.iter().map(|g| g.size).collect::<Vec<_>>(), n.groups.iter().map(|g| g.size).collect::<Vec<_>>());
    }
    let fixed = run_noisy_with(&bundle, &plan, 5.0, &NoiseSource::Fixed(bundle.features().clone())).unwrap();
    assert_eq!(fixed.clean, r.clean);
    assert_eq!(noisy_features(&array![[1.0]], &array![[1.0]], 5.0).unwrap(), array![[6.0]]);
}

#[test]
fn biased_selection_reports_every_class() {
    let bundle = gen_homophilous(&HomophilyConfig {
        n_per_class: 200,
        num_classes: 2,
        intra_p: 0.05,
        ..HomophilyConfig::default()
    })
    .unwrap();
    let plan = TrialPlan { trials: 2, val_count: 100, test_count: 200, ..quick_plan(ModelKind::SgcForm) };
    let plan = TrialPlan { train_per_class: 20, ..plan };
    let r = run_biased_selection(&bundle, &plan, CentralityKind::Degree, 1).unwrap();
    assert_eq!(r.classes.len(), 2);
    assert_eq!(r.per_trial.len(), 2);
    assert!(run_biased_selection(&bundle, &plan, CentralityKind::Degree, 2).is_err());
    let few = TrialPlan { train_per_class: 10, ..plan };
    assert!(run_biased_selection(&bundle, &few, CentralityKind::Degree, 0).is_err());
}
