use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_split, Context, TrialPlan};
use crate::aggregate::AggregatedFeatures;
use crate::error::{Error, Result};
use crate::graph::{GraphBundle, NodeId};
use crate::pac_bayes::{theorem3_concrete, BoundConfig, BoundReport, LabelInfo};
use crate::subgroup::{agg_distance_scores, split_into_groups, SplitKind};
use crate::synth::AssumptionWorld;
use crate::train::train;

const LABEL_SALT: u64 = 0x6c61_6265_6c73;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundTrial {
    pub trial: usize,
    pub seed: u64,
    /// One report per subgroup, group 1 first.
    pub reports: Vec<BoundReport>,
    /// The single-beta bound never decreases as `epsilon_m` grows.
    pub rhs_nondecreasing_in_epsilon: bool,
    /// Every subgroup's single-beta bound is at least its observed risk.
    pub rhs_covers_observed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundAuditReport {
    pub bundle: String,
    pub synthetic_world: bool,
    pub split: SplitKind,
    pub groups: usize,
    pub trials: usize,
    pub config: BoundConfig,
    pub ordering_violations: usize,
    pub frac_trials_covered: f64,
    pub per_trial: Vec<BoundTrial>,
}

fn finish_trial(trial: usize, seed: u64, reports: Vec<BoundReport>) -> BoundTrial {
    let mut by_eps: Vec<&BoundReport> = reports.iter().collect();
    by_eps.sort_by(|a, b| a.epsilon_m.total_cmp(&b.epsilon_m));
    let ordered = by_eps
        .windows(2)
        .all(|w| w[1].theorem3_concrete_rhs >= w[0].theorem3_concrete_rhs);
    let covered = reports.iter().all(|r| r.theorem3_concrete_rhs >= r.observed_test_risk);
    BoundTrial { trial, seed, reports, rhs_nondecreasing_in_epsilon: ordered, rhs_covers_observed: covered }
}

#[allow(clippy::too_many_arguments)]
fn group_reports(
    z: &AggregatedFeatures,
    labels: &[usize],
    info: &LabelInfo,
    model: &crate::model::MlpClassifier,
    train_ids: &[NodeId],
    groups: &[Vec<NodeId>],
    cfg: &BoundConfig,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let local = BoundConfig { seed: seed.wrapping_mul(1_000_003).wrapping_add(g as u64), ..cfg.clone() };
            theorem3_concrete(model, z, labels, info, train_ids, members, &local)
        })
        .collect()
}

fn summarize(
    bundle: &str,
    synthetic_world: bool,
    plan: &TrialPlan,
    split: SplitKind,
    cfg: &BoundConfig,
    per_trial: Vec<BoundTrial>,
) -> BoundAuditReport {
    let covered = per_trial.iter().filter(|t| t.rhs_covers_observed).count();
    BoundAuditReport {
        bundle: bundle.to_string(),
        synthetic_world,
        split,
        groups: plan.groups,
        trials: plan.trials,
        config: cfg.clone(),
        ordering_violations: per_trial.iter().filter(|t| !t.rhs_nondecreasing_in_epsilon).count(),
        frac_trials_covered: covered as f64 / per_trial.len() as f64,
        per_trial,
    }
}

/// Per-subgroup bound reports on a real or synthetic bundle whose label
/// distribution is unknown. `cfg.c` is taken as given.
pub fn run_bound_audit(bundle: &GraphBundle, plan: &TrialPlan, cfg: &BoundConfig) -> Result<BoundAuditReport> {
    plan.validate()?;
    cfg.validate()?;
    let ctx = Context::new(bundle, plan, false)?;
    let z = ctx.z_model.as_ref().expect("shared model features");
    let labels = bundle.labels();
    let per_trial = (0..plan.trials)
        .into_par_iter()
        .map(|t| -> Result<BoundTrial> {
            let seed = plan.trial_seed(t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let split = sample_split(bundle, plan, &mut rng)?;
            let model = train(z.matrix(), labels, bundle.num_classes(), &split.train, &split.val, &plan.train_config(seed))?;
            let scores = ctx.test_scores(plan.split, &split.train, &split.test, None)?;
            let groups = split_into_groups(&scores, plan.groups, plan.split.order())?;
            let reports = group_reports(z, labels, &LabelInfo::Empirical, &model, &split.train, &groups, cfg, seed)?;
            Ok(finish_trial(t, seed, reports))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(bundle.name(), false, plan, plan.split, cfg, per_trial))
}

/// Bound audit on an assumption world. `V_0` is the world's training set in
/// every trial; labels are redrawn from `eta` per trial; validation nodes
/// come from `V_m` and the remaining `V_m` nodes (up to `test_count`) are
/// split by distance to `V_0`. `cfg.c` is replaced by the world's certified
/// constant.
pub fn run_bound_audit_world(world: &AssumptionWorld, plan: &TrialPlan, cfg: &BoundConfig) -> Result<BoundAuditReport> {
    plan.validate()?;
    cfg.validate()?;
    if plan.val_count >= world.test.len() {
        return Err(Error::invalid(format!(
            "validation count {} leaves no test nodes in V_m of size {}",
            plan.val_count,
            world.test.len()
        )));
    }
    let available = world.test.len() - plan.val_count;
    if plan.groups > available.min(plan.test_count) {
        return Err(Error::invalid("more groups than test nodes in V_m"));
    }
    let cfg = BoundConfig { c: world.eta.lipschitz_c(), ..cfg.clone() };
    let info = LabelInfo::Known(world.eta.eta().to_owned());
    let k = world.bundle.num_classes();
    let per_trial = (0..plan.trials)
        .into_par_iter()
        .map(|t| -> Result<BoundTrial> {
            let seed = plan.trial_seed(t);
            let labels = world.resample_labels(seed ^ LABEL_SALT)?.bundle.labels().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pool = world.test.clone();
            pool.shuffle(&mut rng);
            let val = pool[..plan.val_count].to_vec();
            let test: Vec<NodeId> = pool[plan.val_count..].iter().take(plan.test_count).copied().collect();
            let model = train(world.z.matrix(), &labels, k, &world.train, &val, &plan.train_config(seed))?;
            let scores = agg_distance_scores(&world.z, &world.train, &test)?;
            let groups = split_into_groups(&scores, plan.groups, SplitKind::AggDistance.order())?;
            let reports = group_reports(&world.z, &labels, &info, &model, &world.train, &groups, &cfg, seed)?;
            Ok(finish_trial(t, seed, reports))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(world.bundle.name(), true, plan, SplitKind::AggDistance, &cfg, per_trial))
}
