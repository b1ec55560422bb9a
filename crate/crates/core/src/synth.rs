//! Synthetic stand-ins: homophilous block-model graphs for the disparity
//! experiments, and edgeless "assumption worlds" whose aggregated features,
//! near-set structure and label distribution are all known exactly.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aggregate::{AggregatedFeatures, AggregationSpec};
use crate::error::{Error, Result};
use crate::graph::{load_bundle, read_matrix_csv, read_required, save_bundle, write_file, GraphBundle, NodeId};
use crate::model::check_distribution_rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyConfig {
    pub n_per_class: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub center_sep: f64,
    pub noise_std: f64,
    /// Log-normal spread of per-node degree propensities; 0 gives a plain
    /// stochastic block model.
    pub degree_heterogeneity: f64,
    /// Latent communities per class, as equal contiguous blocks of the class.
    pub communities_per_class: usize,
    /// Norm of each community's random feature offset from its class centre.
    pub community_sep: f64,
    /// Multiplier on `intra_p` for same-class pairs in different communities.
    pub cross_community: f64,
    pub seed: u64,
}

impl Default for HomophilyConfig {
    fn default() -> Self {
        Self {
            n_per_class: 400,
            num_classes: 4,
            dim: 16,
            intra_p: 0.01,
            inter_p: 0.001,
            center_sep: 1.0,
            noise_std: 1.0,
            degree_heterogeneity: 0.0,
            communities_per_class: 1,
            community_sep: 0.0,
            cross_community: 1.0,
            seed: 0,
        }
    }
}

impl HomophilyConfig {
    /// Degree-heterogeneous graph whose classes are unions of ten tight
    /// communities. Features carry only the community offset, so nodes far
    /// from every training node in feature space are hard for a plain MLP
    /// and easy once neighbours are averaged in.
    pub fn community_benchmark(seed: u64) -> Self {
        Self {
            intra_p: 0.1,
            center_sep: 0.0,
            degree_heterogeneity: 1.0,
            communities_per_class: 10,
            community_sep: 4.0,
            cross_community: 0.1,
            seed,
            ..Self::default()
        }
    }
}

/// Block-model graph with class-centred Gaussian features. Node `i` belongs to
/// class `i / n_per_class`; the class-`k` centre is `center_sep * e_k`, shifted
/// per latent community by a random offset of norm `community_sep`.
pub fn gen_homophilous(cfg: &HomophilyConfig) -> Result<GraphBundle> {
    let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
    if !prob_ok(cfg.intra_p) || !prob_ok(cfg.inter_p) || cfg.intra_p <= cfg.inter_p {
        return Err(Error::invalid(format!(
            "need 0 <= inter_p < intra_p <= 1, got intra {} inter {}",
            cfg.intra_p, cfg.inter_p
        )));
    }
    if cfg.num_classes < 2 || cfg.n_per_class == 0 {
        return Err(Error::invalid("need at least two classes with one node each"));
    }
    if cfg.dim < cfg.num_classes {
        return Err(Error::invalid("feature dimension must be at least the class count"));
    }
    if !(cfg.noise_std >= 0.0) || !(cfg.degree_heterogeneity >= 0.0) || !cfg.center_sep.is_finite() {
        return Err(Error::invalid("noise, centre separation and heterogeneity must be finite and non-negative"));
    }
    if cfg.communities_per_class == 0 || cfg.communities_per_class > cfg.n_per_class {
        return Err(Error::invalid("communities per class must be in 1..=n_per_class"));
    }
    if !(cfg.community_sep >= 0.0) || !cfg.community_sep.is_finite() || !(0.0..=1.0).contains(&cfg.cross_community) {
        return Err(Error::invalid("community separation must be non-negative and cross_community in [0, 1]"));
    }
    let n = cfg.n_per_class * cfg.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.n_per_class).collect();
    let cpc = cfg.communities_per_class;
    let community: Vec<usize> = (0..n)
        .map(|i| labels[i] * cpc + (i % cfg.n_per_class) * cpc / cfg.n_per_class)
        .collect();
    let offsets: Vec<Array1<f64>> = (0..cfg.num_classes * cpc)
        .map(|_| random_unit(cfg.dim, &mut rng) * cfg.community_sep)
        .collect();

    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            (cfg.degree_heterogeneity * g).exp()
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let weight: Vec<f64> = raw.iter().map(|w| w / mean).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let base = if community[i] == community[j] {
                cfg.intra_p
            } else if labels[i] == labels[j] {
                cfg.intra_p * cfg.cross_community
            } else {
                cfg.inter_p
            };
            let p = (base * weight[i] * weight[j]).min(1.0);
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let features = Array2::from_shape_fn((n, cfg.dim), |(i, d)| {
        let g: f64 = StandardNormal.sample(&mut rng);
        let center = if d == labels[i] { cfg.center_sep } else { 0.0 };
        center + offsets[community[i]][d] + cfg.noise_std * g
    });
    GraphBundle::new("homophilous", n, edges, features, labels, cfg.num_classes)
}

/// Conditional label probabilities per node plus the Lipschitz constant they
/// satisfy over the world's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    eta: Array2<f64>,
    lipschitz_c: f64,
}

impl LabelField {
    pub fn new(eta: Array2<f64>, lipschitz_c: f64) -> Result<Self> {
        check_distribution_rows(eta.view())?;
        if eta.ncols() < 2 {
            return Err(Error::invalid("label field needs at least two classes"));
        }
        if !(lipschitz_c >= 0.0) {
            return Err(Error::invalid("Lipschitz constant must be non-negative"));
        }
        Ok(Self { eta, lipschitz_c })
    }

    pub fn eta(&self) -> ArrayView2<'_, f64> {
        self.eta.view()
    }

    pub fn lipschitz_c(&self) -> f64 {
        self.lipschitz_c
    }

    pub fn num_classes(&self) -> usize {
        self.eta.ncols()
    }
}

/// One categorical draw per row.
pub fn sample_labels(eta: &LabelField, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eta.eta
        .rows()
        .into_iter()
        .map(|row| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect()
}

/// Largest `|eta_k(z_i) - eta_k(z_j)| / ||z_i - z_j||` over all row pairs.
pub fn measured_lipschitz(z: ArrayView2<f64>, eta: ArrayView2<f64>) -> f64 {
    let n = z.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let diff = &z.row(i) - &z.row(j);
            let dist = diff.dot(&diff).sqrt();
            if dist == 0.0 {
                continue;
            }
            let gap = eta
                .row(i)
                .iter()
                .zip(eta.row(j))
                .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
            worst = worst.max(gap / dist);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WorldLayout {
    /// Train rows at `i * spread * e_1`; each train row's first test row sits
    /// at distance exactly `eps` along `+e_1` (even `i`) or `-e_1` (odd `i`).
    #[default]
    Line,
    /// Train rows at random Gaussian positions, pairwise at least `spread`
    /// apart; test offsets point in random directions.
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_0: usize,
    pub s_m: usize,
    pub dim: usize,
    pub epsilon_m: f64,
    pub c: f64,
    pub num_classes: usize,
    pub spread: f64,
    pub layout: WorldLayout,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_0: 2,
            s_m: 1,
            dim: 2,
            epsilon_m: 1.0,
            c: 0.1,
            num_classes: 2,
            spread: 10.0,
            layout: WorldLayout::Line,
            seed: 0,
        }
    }
}

/// Nodes `0..n_0` are the training rows; the test rows attached to train row
/// `i` are `n_0 + i * s_m .. n_0 + (i + 1) * s_m`.
#[derive(Debug, Clone)]
pub struct AssumptionWorld {
    pub bundle: GraphBundle,
    pub z: AggregatedFeatures,
    pub eta: LabelField,
    pub train: Vec<NodeId>,
    pub test: Vec<NodeId>,
    pub epsilon_m: f64,
    pub s_m: usize,
}

impl AssumptionWorld {
    /// Same geometry and label field with a fresh label sample.
    pub fn resample_labels(&self, seed: u64) -> Result<Self> {
        let labels = sample_labels(&self.eta, seed);
        Ok(Self { bundle: self.bundle.with_labels(labels)?, ..self.clone() })
    }
}

pub fn gen_assumption_world(cfg: &WorldConfig) -> Result<AssumptionWorld> {
    if !(cfg.epsilon_m >= 0.0) || !cfg.spread.is_finite() || cfg.spread <= 2.0 * cfg.epsilon_m {
        return Err(Error::invalid(format!(
            "infeasible geometry: spread {} must exceed 2 * eps_m = {}",
            cfg.spread,
            2.0 * cfg.epsilon_m
        )));
    }
    if cfg.n_0 == 0 || cfg.s_m == 0 || cfg.dim == 0 || cfg.num_classes < 2 {
        return Err(Error::invalid("n_0, s_m and dim must be positive and K at least 2"));
    }
    if !(cfg.c >= 0.0) || !cfg.c.is_finite() {
        return Err(Error::invalid("c must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let n = cfg.n_0 * (1 + cfg.s_m);
    let mut z = Array2::<f64>::zeros((n, d));

    match cfg.layout {
        WorldLayout::Line => {
            for i in 0..cfg.n_0 {
                z[[i, 0]] = i as f64 * cfg.spread;
            }
        }
        WorldLayout::Scattered => place_scattered(&mut z, cfg, &mut rng),
    }

    for i in 0..cfg.n_0 {
        for j in 0..cfg.s_m {
            let row = cfg.n_0 + i * cfg.s_m + j;
            let (dir, radius) = if j == 0 {
                let dir = match cfg.layout {
                    WorldLayout::Line => {
                        let mut e = Array1::zeros(d);
                        e[0] = if i % 2 == 0 { 1.0 } else { -1.0 };
                        e
                    }
                    WorldLayout::Scattered => random_unit(d, &mut rng),
                };
                (dir, cfg.epsilon_m)
            } else {
                (random_unit(d, &mut rng), cfg.epsilon_m * rng.random::<f64>())
            };
            let target = &z.row(i) + &(dir * radius);
            z.row_mut(row).assign(&target);
        }
    }

    let k = cfg.num_classes;
    let offsets: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..0.5)).collect();
    let slopes: Vec<Array1<f64>> = (0..k).map(|_| random_unit(d, &mut rng) * (2.0 * cfg.c)).collect();
    let eta = Array2::from_shape_fn((n, k), |(i, c)| {
        let scores: Vec<f64> = (0..k).map(|j| offsets[j] + slopes[j].dot(&z.row(i))).collect();
        let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
        (scores[c] - mx).exp() / total
    });
    let eta = normalize_rows(eta);
    let measured = measured_lipschitz(z.view(), eta.view());
    if measured > cfg.c + 1e-9 {
        return Err(Error::invalid(format!(
            "constructed label field has Lipschitz constant {measured} above c = {}",
            cfg.c
        )));
    }
    let field = LabelField::new(eta, measured)?;
    let labels = sample_labels(&field, cfg.seed.wrapping_add(1));
    let bundle = GraphBundle::new("assumption_world", n, Vec::new(), z.clone(), labels, k)?;
    Ok(AssumptionWorld {
        bundle,
        z: AggregatedFeatures::new(z, AggregationSpec::Identity),
        eta: field,
        train: (0..cfg.n_0).collect(),
        test: (cfg.n_0..n).collect(),
        epsilon_m: cfg.epsilon_m,
        s_m: cfg.s_m,
    })
}

fn normalize_rows(mut eta: Array2<f64>) -> Array2<f64> {
    for mut row in eta.axis_iter_mut(Axis(0)) {
        let s = row.sum();
        row.mapv_inplace(|p| p / s);
    }
    eta
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_fn(d, |_| StandardNormal.sample(rng));
        let norm: f64 = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

fn place_scattered(z: &mut Array2<f64>, cfg: &WorldConfig, rng: &mut impl Rng) {
    let mut scale = cfg.spread * (cfg.n_0 as f64).powf(1.0 / cfg.dim as f64);
    let mut placed = 0;
    let mut failures = 0;
    while placed < cfg.n_0 {
        let cand = Array1::from_shape_fn(cfg.dim, |_| {
            let g: f64 = StandardNormal.sample(rng);
            scale * g
        });
        let clear = (0..placed).all(|i| {
            let diff = &cand - &z.row(i);
            diff.dot(&diff).sqrt() >= cfg.spread
        });
        if clear {
            z.row_mut(placed).assign(&cand);
            placed += 1;
            failures = 0;
        } else {
            failures += 1;
            if failures == 1000 {
                scale *= 1.5;
                failures = 0;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct WorldMeta {
    epsilon_m: f64,
    s_m: usize,
    c: f64,
    v0: Vec<NodeId>,
    vm: Vec<NodeId>,
}

/// Bundle files plus `eta.csv` and `world.json`.
pub fn save_world(world: &AssumptionWorld, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    save_bundle(&world.bundle, dir)?;
    write_file(&dir.join("eta.csv"), crate::graph::matrix_csv(&world.eta.eta).as_bytes())?;
    let meta = WorldMeta {
        epsilon_m: world.epsilon_m,
        s_m: world.s_m,
        c: world.eta.lipschitz_c,
        v0: world.train.clone(),
        vm: world.test.clone(),
    };
    write_file(&dir.join("world.json"), serde_json::to_string_pretty(&meta)?.as_bytes())
}

pub fn load_world(dir: impl AsRef<Path>) -> Result<AssumptionWorld> {
    let dir = dir.as_ref();
    let bundle = load_bundle(dir)?;
    let meta: WorldMeta = serde_json::from_str(&read_required(&dir.join("world.json"))?)?;
    let eta = read_matrix_csv(&dir.join("eta.csv"), bundle.num_classes())?;
    if eta.nrows() != bundle.num_nodes() {
        return Err(Error::InvalidBundle("eta.csv needs one row per node".into()));
    }
    let n = bundle.num_nodes();
    if meta.v0.iter().chain(&meta.vm).any(|&v| v >= n) {
        return Err(Error::InvalidBundle("world.json references a node outside the bundle".into()));
    }
    Ok(AssumptionWorld {
        z: AggregatedFeatures::new(bundle.features().clone(), AggregationSpec::Identity),
        eta: LabelField::new(eta, meta.c)?,
        bundle,
        train: meta.v0,
        test: meta.vm,
        epsilon_m: meta.epsilon_m,
        s_m: meta.s_m,
    })
}

/// True when a directory looks like a saved assumption world.
pub fn is_world_dir(dir: impl AsRef<Path>) -> bool {
    let dir = dir.as_ref();
    dir.join("world.json").is_file() && dir.join("eta.csv").is_file()
}
