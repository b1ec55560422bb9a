//! Repeated seeded trials of the subgroup experiments.
//!
//! Every trial derives its generator from `base_seed + trial`, runs on its
//! own data, and results are folded in trial order, so a report is a pure
//! function of the plan and the bundle.

mod biased;
mod bound_audit;

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_matrix, AggregatedFeatures, AggregationSpec};
use crate::error::{Error, Result};
use crate::graph::{CsrAdjacency, GraphBundle, NodeId};
use crate::pac_bayes::mean_and_se;
use crate::subgroup::{agg_distance_scores, centrality_scores, geodesic_scores, split_into_groups, Scores, SplitKind};
use crate::train::{train, TrainConfig};

pub use biased::{run_biased_selection, BiasedReport, BiasedTrial, ClassRatio};
pub use bound_audit::{run_bound_audit, run_bound_audit_world, BoundAuditReport, BoundTrial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Two-step normalized aggregation followed by the MLP.
    SgcForm,
    /// The MLP on raw features.
    Mlp,
}

impl ModelKind {
    pub fn aggregation(self) -> AggregationSpec {
        match self {
            ModelKind::SgcForm => AggregationSpec::TwoStepNorm,
            ModelKind::Mlp => AggregationSpec::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub model: ModelKind,
    pub aggregation: AggregationSpec,
    pub split: SplitKind,
    pub groups: usize,
    pub trials: usize,
    pub train_per_class: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for TrialPlan {
    fn default() -> Self {
        Self::new(ModelKind::SgcForm)
    }
}

impl TrialPlan {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            aggregation: model.aggregation(),
            split: SplitKind::AggDistance,
            groups: 5,
            trials: 40,
            train_per_class: 20,
            val_count: 500,
            test_count: 1000,
            seed: 0,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.groups == 0 {
            return Err(Error::invalid("groups must be at least 1"));
        }
        if self.train_per_class == 0 || self.val_count == 0 || self.test_count == 0 {
            return Err(Error::invalid("train, validation and test sizes must be positive"));
        }
        if self.groups > self.test_count {
            return Err(Error::invalid("more groups than test nodes"));
        }
        self.train.validate()
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    fn train_config(&self, trial_seed: u64) -> TrainConfig {
        TrainConfig { seed: trial_seed, ..self.train.clone() }
    }
}

/// One trial's disjoint node sets, each in sampling order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSplit {
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

pub(crate) fn nodes_by_class(bundle: &GraphBundle) -> Vec<Vec<NodeId>> {
    let mut by_class = vec![Vec::new(); bundle.num_classes()];
    for (i, &y) in bundle.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    by_class
}

/// Uniform `per_class` training nodes from every class, then validation and
/// test nodes drawn from the rest.
pub fn sample_split(bundle: &GraphBundle, plan: &TrialPlan, rng: &mut impl Rng) -> Result<TrialSplit> {
    let mut train = Vec::new();
    for (k, mut members) in nodes_by_class(bundle).into_iter().enumerate() {
        if members.len() < plan.train_per_class {
            return Err(Error::invalid(format!(
                "class {k} has {} nodes, fewer than the {} training nodes requested",
                members.len(),
                plan.train_per_class
            )));
        }
        members.shuffle(rng);
        train.extend_from_slice(&members[..plan.train_per_class]);
    }
    let (val, test) = sample_val_test(bundle.num_nodes(), &train, plan, rng)?;
    Ok(TrialSplit { train, val, test })
}

pub(crate) fn sample_val_test(
    num_nodes: usize,
    exclude: &[NodeId],
    plan: &TrialPlan,
    rng: &mut impl Rng,
) -> Result<(Vec<NodeId>, Vec<NodeId>)> {
    let taken: HashSet<NodeId> = exclude.iter().copied().collect();
    let mut pool: Vec<NodeId> = (0..num_nodes).filter(|i| !taken.contains(i)).collect();
    if pool.len() < plan.val_count + plan.test_count {
        return Err(Error::invalid(format!(
            "{} nodes remain after training selection but validation + test needs {}",
            pool.len(),
            plan.val_count + plan.test_count
        )));
    }
    pool.shuffle(rng);
    let val = pool[..plan.val_count].to_vec();
    let test = pool[plan.val_count..plan.val_count + plan.test_count].to_vec();
    Ok((val, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    /// 1-based group index.
    pub group: usize,
    pub size: usize,
    pub accuracy: f64,
    pub score_min: f64,
    pub score_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub overall_accuracy: f64,
    pub spearman: Option<f64>,
    pub groups: Vec<GroupRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub bundle: String,
    pub model: ModelKind,
    pub aggregation: AggregationSpec,
    pub split: SplitKind,
    pub groups: usize,
    pub trials: usize,
    pub seed: u64,
    pub group_mean_accuracy: Vec<f64>,
    /// `None` when there is a single trial.
    pub group_std_err: Vec<Option<f64>>,
    pub group_sizes: Vec<usize>,
    pub overall_mean_accuracy: f64,
    /// Mean Spearman correlation between group index and accuracy over trials
    /// where it is defined.
    pub mean_spearman: Option<f64>,
    /// Share of all trials with a strictly negative correlation.
    pub frac_spearman_negative: Option<f64>,
    pub per_trial: Vec<TrialRecord>,
}

/// Spearman correlation with average ranks for ties. `None` for fewer than
/// two points or when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Trial-invariant inputs shared by every trial of a run.
pub(crate) struct Context<'a> {
    pub bundle: &'a GraphBundle,
    pub adj: CsrAdjacency,
    /// Model input, `None` when it changes per trial.
    pub z_model: Option<AggregatedFeatures>,
    /// Two-step features used for the aggregated-distance split.
    pub z_distance: Option<AggregatedFeatures>,
    pub centrality: Option<Scores>,
}

impl<'a> Context<'a> {
    pub fn new(bundle: &'a GraphBundle, plan: &TrialPlan, per_trial_features: bool) -> Result<Self> {
        let adj = bundle.to_csr();
        let z_model = (!per_trial_features).then(|| aggregate_matrix(bundle.features(), &adj, plan.aggregation));
        let z_distance = match (plan.split, &z_model) {
            (SplitKind::AggDistance, Some(z)) if plan.aggregation == AggregationSpec::TwoStepNorm => Some(z.clone()),
            (SplitKind::AggDistance, Some(_)) => {
                Some(aggregate_matrix(bundle.features(), &adj, AggregationSpec::TwoStepNorm))
            }
            _ => None,
        };
        let centrality = plan.split.centrality().map(|k| centrality_scores(&adj, k)).transpose()?;
        Ok(Self { bundle, adj, z_model, z_distance, centrality })
    }

    /// `z_distance` overrides the shared two-step features when the trial
    /// uses its own feature matrix.
    pub fn test_scores(
        &self,
        split: SplitKind,
        train: &[NodeId],
        test: &[NodeId],
        z_distance: Option<&AggregatedFeatures>,
    ) -> Result<Scores> {
        match split {
            SplitKind::AggDistance => {
                let z = z_distance.or(self.z_distance.as_ref()).expect("two-step features available");
                agg_distance_scores(z, train, test)
            }
            SplitKind::Geodesic => Ok(geodesic_scores(&self.adj, train, test)),
            _ => {
                let all = self.centrality.as_ref().unwrap();
                Ok(test.iter().map(|&i| (i, all[&i])).collect())
            }
        }
    }
}

fn run_trial(
    ctx: &Context<'_>,
    plan: &TrialPlan,
    trial: usize,
    features: Option<&Array2<f64>>,
) -> Result<TrialRecord> {
    let seed = plan.trial_seed(trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = sample_split(ctx.bundle, plan, &mut rng)?;
    let owned;
    let mut own_distance = None;
    let z = match (features, &ctx.z_model) {
        (Some(x), _) => {
            owned = aggregate_matrix(x, &ctx.adj, plan.aggregation);
            if plan.split == SplitKind::AggDistance {
                own_distance = Some(if plan.aggregation == AggregationSpec::TwoStepNorm {
                    owned.clone()
                } else {
                    aggregate_matrix(x, &ctx.adj, AggregationSpec::TwoStepNorm)
                });
            }
            &owned
        }
        (None, Some(z)) => z,
        (None, None) => unreachable!("context built without model features"),
    };
    let labels = ctx.bundle.labels();
    let model = train(
        z.matrix(),
        labels,
        ctx.bundle.num_classes(),
        &split.train,
        &split.val,
        &plan.train_config(seed),
    )?;
    let preds = model.predict(z.select_rows(&split.test).view())?;
    let correct: std::collections::HashMap<NodeId, bool> = split
        .test
        .iter()
        .zip(&preds)
        .map(|(&i, &p)| (i, p == labels[i]))
        .collect();
    let scores = ctx.test_scores(plan.split, &split.train, &split.test, own_distance.as_ref())?;
    let groups = split_into_groups(&scores, plan.groups, plan.split.order())?;
    let records: Vec<GroupRecord> = groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let hits = members.iter().filter(|i| correct[i]).count();
            let vals = members.iter().map(|i| scores[i]);
            GroupRecord {
                group: g + 1,
                size: members.len(),
                accuracy: hits as f64 / members.len() as f64,
                score_min: vals.clone().fold(f64::INFINITY, f64::min),
                score_max: vals.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let idx: Vec<f64> = (1..=records.len()).map(|g| g as f64).collect();
    let acc: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let overall = correct.values().filter(|&&c| c).count() as f64 / correct.len() as f64;
    Ok(TrialRecord { trial, seed, overall_accuracy: overall, spearman: spearman(&idx, &acc), groups: records })
}

fn summarize(bundle: &GraphBundle, plan: &TrialPlan, per_trial: Vec<TrialRecord>) -> DisparityReport {
    let m = plan.groups;
    let mut means = Vec::with_capacity(m);
    let mut errs = Vec::with_capacity(m);
    for g in 0..m {
        let vals: Vec<f64> = per_trial.iter().map(|t| t.groups[g].accuracy).collect();
        let (mean, se) = mean_and_se(&vals);
        means.push(mean);
        errs.push(se);
    }
    let rhos: Vec<f64> = per_trial.iter().filter_map(|t| t.spearman).collect();
    let (mean_spearman, frac_neg) = if rhos.is_empty() {
        (None, None)
    } else {
        let neg = rhos.iter().filter(|&&r| r < 0.0).count();
        (Some(rhos.iter().sum::<f64>() / rhos.len() as f64), Some(neg as f64 / per_trial.len() as f64))
    };
    let overall: Vec<f64> = per_trial.iter().map(|t| t.overall_accuracy).collect();
    DisparityReport {
        bundle: bundle.name().to_string(),
        model: plan.model,
        aggregation: plan.aggregation,
        split: plan.split,
        groups: m,
        trials: plan.trials,
        seed: plan.seed,
        group_mean_accuracy: means,
        group_std_err: errs,
        group_sizes: per_trial[0].groups.iter().map(|g| g.size).collect(),
        overall_mean_accuracy: mean_and_se(&overall).0,
        mean_spearman,
        frac_spearman_negative: frac_neg,
        per_trial,
    }
}

pub fn run_disparity(bundle: &GraphBundle, plan: &TrialPlan) -> Result<DisparityReport> {
    plan.validate()?;
    let ctx = Context::new(bundle, plan, false)?;
    let per_trial = (0..plan.trials)
        .into_par_iter()
        .map(|t| run_trial(&ctx, plan, t, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(bundle, plan, per_trial))
}

/// `X + alpha (||X||_F / ||U||_F) U`.
pub fn noisy_features(x: &Array2<f64>, u: &Array2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if x.dim() != u.dim() {
        return Err(Error::Dimension("noise matrix must match the feature shape".into()));
    }
    let fx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if fu == 0.0 {
        return Err(Error::invalid("noise matrix must be non-zero"));
    }
    Ok(x + &(u * (alpha * fx / fu)))
}

/// Where the noise matrix `U` comes from.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    /// Fresh i.i.d. `U[0, 1]` entries per trial, seeded from the trial seed.
    Uniform,
    /// The same matrix in every trial.
    Fixed(Array2<f64>),
}

const NOISE_SALT: u64 = 0x6e6f_6973_6520_5531;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyReport {
    pub alpha: f64,
    pub clean: DisparityReport,
    pub noisy: DisparityReport,
}

pub fn run_noisy(bundle: &GraphBundle, plan: &TrialPlan, alpha: f64) -> Result<NoisyReport> {
    run_noisy_with(bundle, plan, alpha, &NoiseSource::Uniform)
}

/// Clean and noisy arms with identical per-trial splits and training seeds.
pub fn run_noisy_with(bundle: &GraphBundle, plan: &TrialPlan, alpha: f64, noise: &NoiseSource) -> Result<NoisyReport> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
    }
    let clean = run_disparity(bundle, plan)?;
    let noisy = if alpha == 0.0 {
        clean.clone()
    } else {
        let ctx = Context::new(bundle, plan, true)?;
        let x = bundle.features();
        let per_trial = (0..plan.trials)
            .into_par_iter()
            .map(|t| {
                let u = match noise {
                    NoiseSource::Fixed(u) => u.clone(),
                    NoiseSource::Uniform => {
                        let mut rng = ChaCha8Rng::seed_from_u64(plan.trial_seed(t) ^ NOISE_SALT);
                        Array2::from_shape_fn(x.raw_dim(), |_| rng.random::<f64>())
                    }
                };
                let xt = noisy_features(x, &u, alpha)?;
                run_trial(&ctx, plan, t, Some(&xt))
            })
            .collect::<Result<Vec<_>>>()?;
        summarize(bundle, plan, per_trial)
    };
    Ok(NoisyReport { alpha, clean, noisy })
}

/// Flat table: `trial,group,size,accuracy,score_min,score_max`.
pub fn disparity_csv(report: &DisparityReport) -> String {
    let mut out = String::from("trial,group,size,accuracy,score_min,score_max\n");
    for t in &report.per_trial {
        for g in &t.groups {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.trial, g.group, g.size, g.accuracy, g.score_min, g.score_max
            ));
        }
    }
    out
}
