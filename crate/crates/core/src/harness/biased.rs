use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nodes_by_class, sample_val_test, ModelKind, TrialPlan, TrialSplit};
use crate::aggregate::aggregate_matrix;
use crate::error::{Error, Result};
use crate::graph::{GraphBundle, NodeId};
use crate::subgroup::{centrality_scores, CentralityKind, Scores};
use crate::train::train;

const TIER_DRAW: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasedTrial {
    pub trial: usize,
    pub seed: u64,
    pub fpr_uniform: Vec<Option<f64>>,
    pub fpr_biased: Vec<Option<f64>>,
    /// `fpr_biased / fpr_uniform`, `None` when the uniform rate is zero.
    pub ratio: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRatio {
    pub class: usize,
    pub mean_ratio: Option<f64>,
    pub defined_trials: usize,
    /// Ratio of false-positive rates pooled over all trials.
    pub pooled_ratio: Option<f64>,
    pub mean_fpr_uniform: Option<f64>,
    pub mean_fpr_biased: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasedReport {
    pub bundle: String,
    pub model: ModelKind,
    pub centrality: CentralityKind,
    pub dominant_class: usize,
    pub trials: usize,
    pub seed: u64,
    pub classes: Vec<ClassRatio>,
    pub per_trial: Vec<BiasedTrial>,
    pub note: String,
}

/// Class members ordered from most to least central, ties by id.
fn ranked(members: &[NodeId], scores: &Scores) -> Vec<NodeId> {
    let mut v = members.to_vec();
    v.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then(a.cmp(b)));
    v
}

fn biased_train(
    by_class: &[Vec<NodeId>],
    scores: &Scores,
    dominant: usize,
    per_class: usize,
    rng: &mut impl Rng,
) -> Vec<NodeId> {
    let mut out = Vec::new();
    for (k, members) in by_class.iter().enumerate() {
        let order = ranked(members, scores);
        let tier = members.len().div_ceil(10);
        let (mut tier_nodes, mut rest) = if k == dominant {
            (order[..tier].to_vec(), order[tier..].to_vec())
        } else {
            let cut = order.len() - tier;
            (order[cut..].to_vec(), order[..cut].to_vec())
        };
        tier_nodes.shuffle(rng);
        rest.shuffle(rng);
        out.extend_from_slice(&tier_nodes[..TIER_DRAW]);
        out.extend_from_slice(&rest[..per_class - TIER_DRAW]);
    }
    out
}

#[derive(Default, Clone, Copy)]
struct Counts {
    fp: usize,
    tn: usize,
}

impl Counts {
    fn rate(self) -> Option<f64> {
        let d = self.fp + self.tn;
        (d > 0).then(|| self.fp as f64 / d as f64)
    }
}

fn fpr_counts(test: &[NodeId], preds: &[usize], labels: &[usize], k: usize) -> Vec<Counts> {
    let mut c = vec![Counts::default(); k];
    for (&i, &p) in test.iter().zip(preds) {
        for (class, cnt) in c.iter_mut().enumerate() {
            if labels[i] != class {
                if p == class {
                    cnt.fp += 1;
                } else {
                    cnt.tn += 1;
                }
            }
        }
    }
    c
}

/// Uniform versus centrality-biased training selection with matched
/// validation and test sets and training seeds.
pub fn run_biased_selection(
    bundle: &GraphBundle,
    plan: &TrialPlan,
    centrality: CentralityKind,
    dominant_class: usize,
) -> Result<BiasedReport> {
    plan.validate()?;
    let k = bundle.num_classes();
    if dominant_class >= k {
        return Err(Error::invalid(format!("dominant class {dominant_class} is not in 0..{k}")));
    }
    if plan.train_per_class < TIER_DRAW {
        return Err(Error::invalid(format!("biased selection needs at least {TIER_DRAW} training nodes per class")));
    }
    let by_class = nodes_by_class(bundle);
    for (c, members) in by_class.iter().enumerate() {
        let tier = members.len().div_ceil(10);
        if tier < TIER_DRAW || members.len() - tier < plan.train_per_class - TIER_DRAW {
            return Err(Error::invalid(format!(
                "class {c} has {} nodes; its 10% tier of {tier} cannot supply {TIER_DRAW} draws",
                members.len()
            )));
        }
    }
    let adj = bundle.to_csr();
    let z = aggregate_matrix(bundle.features(), &adj, plan.aggregation);
    let scores = centrality_scores(&adj, centrality)?;
    let labels = bundle.labels();

    let per_trial = (0..plan.trials)
        .into_par_iter()
        .map(|t| -> Result<(BiasedTrial, Vec<Counts>, Vec<Counts>)> {
            let seed = plan.trial_seed(t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut uniform = Vec::new();
            for members in &by_class {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                uniform.extend_from_slice(&m[..plan.train_per_class]);
            }
            let biased = biased_train(&by_class, &scores, dominant_class, plan.train_per_class, &mut rng);
            let both: Vec<NodeId> = uniform.iter().chain(&biased).copied().collect();
            let (val, test) = sample_val_test(bundle.num_nodes(), &both, plan, &mut rng)?;
            let arm = |train_ids: Vec<NodeId>| -> Result<Vec<Counts>> {
                let split = TrialSplit { train: train_ids, val: val.clone(), test: test.clone() };
                let model = train(z.matrix(), labels, k, &split.train, &split.val, &plan.train_config(seed))?;
                let preds = model.predict(z.select_rows(&split.test).view())?;
                Ok(fpr_counts(&split.test, &preds, labels, k))
            };
            let cu = arm(uniform)?;
            let cb = arm(biased)?;
            let fpr_uniform: Vec<Option<f64>> = cu.iter().map(|c| c.rate()).collect();
            let fpr_biased: Vec<Option<f64>> = cb.iter().map(|c| c.rate()).collect();
            let ratio = fpr_uniform
                .iter()
                .zip(&fpr_biased)
                .map(|(u, b)| match (u, b) {
                    (Some(u), Some(b)) if *u > 0.0 => Some(b / u),
                    _ => None,
                })
                .collect();
            Ok((BiasedTrial { trial: t, seed, fpr_uniform, fpr_biased, ratio }, cu, cb))
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_of = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let classes = (0..k)
        .map(|c| {
            let ratios: Vec<f64> = per_trial.iter().filter_map(|(t, _, _)| t.ratio[c]).collect();
            let total = |biased: bool| {
                per_trial.iter().fold(Counts::default(), |acc, (_, u, b)| {
                    let row = if biased { &b[c] } else { &u[c] };
                    Counts { fp: acc.fp + row.fp, tn: acc.tn + row.tn }
                })
            };
            let pooled_u = total(false).rate();
            let pooled_b = total(true).rate();
            ClassRatio {
                class: c,
                defined_trials: ratios.len(),
                mean_ratio: mean_of(ratios),
                pooled_ratio: match (pooled_u, pooled_b) {
                    (Some(u), Some(b)) if u > 0.0 => Some(b / u),
                    _ => None,
                },
                mean_fpr_uniform: mean_of(per_trial.iter().filter_map(|(t, _, _)| t.fpr_uniform[c]).collect()),
                mean_fpr_biased: mean_of(per_trial.iter().filter_map(|(t, _, _)| t.fpr_biased[c]).collect()),
            }
        })
        .collect();

    Ok(BiasedReport {
        bundle: bundle.name().to_string(),
        model: plan.model,
        centrality,
        dominant_class,
        trials: plan.trials,
        seed: plan.seed,
        classes,
        per_trial: per_trial.into_iter().map(|(t, _, _)| t).collect(),
        note: "aggregation-then-MLP model used in place of GCN/GAT".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_of_two_hundred_is_twenty() {
        assert_eq!(200usize.div_ceil(10), 20);
        let members: Vec<NodeId> = (0..200).collect();
        let scores: Scores = (0..200).map(|i| (i, i as f64)).collect();
        let by_class = vec![members.clone(), members];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picked = biased_train(&by_class, &scores, 0, 20, &mut rng);
        let dominant = &picked[..20];
        assert_eq!(dominant.iter().filter(|&&i| i >= 180).count(), 15);
        let other = &picked[20..];
        assert_eq!(other.iter().filter(|&&i| i < 20).count(), 15);
    }

    #[test]
    fn fpr_all_correct_is_zero() {
        let labels = [0, 1, 2, 0];
        let c = fpr_counts(&[0, 1, 2, 3], &[0, 1, 2, 0], &labels, 3);
        assert!(c.iter().all(|c| c.rate() == Some(0.0)));
    }
}
