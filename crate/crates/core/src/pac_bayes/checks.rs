use ndarray::{ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_layers, gaussian_matrix, sample_prior, seeded_draws, BoundConfig, PriorSpec};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::model::{expected_margin_loss_from_logits, MlpClassifier};
use crate::synth::AssumptionWorld;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralTailResult {
    pub empirical_prob: f64,
    pub analytic_bound: f64,
    /// Binomial standard error of `empirical_prob`.
    pub std_err: f64,
    pub trials: usize,
    /// `empirical <= analytic + 3 se`, or the bound is vacuous (> 1).
    pub consistent: bool,
}

/// Frequency of `||W||_2 > t` for `rows x cols` Gaussian matrices with entry
/// std `sigma`, against `2b exp(-t^2 / (2 b sigma^2))`.
pub fn spectral_tail_check(
    sigma: f64,
    b: usize,
    rows: usize,
    cols: usize,
    t: f64,
    trials: usize,
    seed: u64,
) -> Result<SpectralTailResult> {
    if trials < 1000 {
        return Err(Error::invalid("spectral tail check needs at least 1000 trials"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    if rows == 0 || cols == 0 || rows > b || cols > b {
        return Err(Error::invalid(format!("matrix {rows}x{cols} must fit within width b = {b}")));
    }
    let exceed = seeded_draws(trials, seed, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let w = gaussian_matrix(rows, cols, sigma, &mut rng);
        spectral_norm(&w).map(|n| n > t)
    })
    .into_iter()
    .collect::<Result<Vec<bool>>>()?
    .into_iter()
    .filter(|&x| x)
    .count();
    let bf = b as f64;
    let analytic_bound = 2.0 * bf * (-(t * t) / (2.0 * bf * sigma * sigma)).exp();
    let p = exceed as f64 / trials as f64;
    let std_err = (p * (1.0 - p) / trials as f64).sqrt();
    Ok(SpectralTailResult {
        empirical_prob: p,
        analytic_bound,
        std_err,
        trials,
        consistent: analytic_bound > 1.0 || p <= analytic_bound + 3.0 * std_err,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiscrepancyEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// `ln E_{h ~ P} exp(lambda (L^{gamma/2}_m(h) - L^gamma_0(h)))` with exact
/// expected losses per draw, averaged in log space after subtracting the
/// maximum exponent. The standard error is the delta-method one.
#[allow(clippy::too_many_arguments)]
pub fn discrepancy_mc(
    prior: &PriorSpec,
    z_m: ArrayView2<f64>,
    eta_m: ArrayView2<f64>,
    z_0: ArrayView2<f64>,
    eta_0: ArrayView2<f64>,
    gamma: f64,
    lambda: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<DiscrepancyEstimate> {
    if mc_samples < 100 {
        return Err(Error::invalid("discrepancy estimate needs at least 100 draws"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let exponents = seeded_draws(mc_samples, seed, |s| -> Result<f64> {
        let h = sample_prior(prior, s)?;
        let lm = expected_margin_loss_from_logits(h.forward(z_m)?.view(), eta_m, gamma / 2.0)?;
        let l0 = expected_margin_loss_from_logits(h.forward(z_0)?.view(), eta_0, gamma)?;
        Ok(lambda * (lm - l0))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(log_mean_exp(&exponents))
}

pub(crate) fn log_mean_exp(x: &[f64]) -> DiscrepancyEstimate {
    let n = x.len() as f64;
    let mx = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    DiscrepancyEstimate {
        estimate: mx + mean.ln(),
        std_err: (var / n).sqrt() / mean,
        samples: x.len(),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `L^{gamma/2}_m(h) - L^gamma_0(h) <= c K eps` for a model meeting
/// `eps * T_h^L <= gamma / 4`.
#[allow(clippy::too_many_arguments)]
pub fn lemma_loss_diff_check(
    model: &MlpClassifier,
    z_m: ArrayView2<f64>,
    eta_m: ArrayView2<f64>,
    z_0: ArrayView2<f64>,
    eta_0: ArrayView2<f64>,
    gamma: f64,
    c: f64,
    k: usize,
    epsilon_m: f64,
) -> Result<LemmaCheck> {
    let norms = model.weight_norms()?;
    let reach = epsilon_m * norms.max_spectral.powi(model.depth() as i32);
    if reach > gamma / 4.0 {
        return Err(Error::HypothesisNotMet(format!(
            "eps_m * T_h^L = {reach} exceeds gamma / 4 = {}",
            gamma / 4.0
        )));
    }
    let lm = expected_margin_loss_from_logits(model.forward(z_m)?.view(), eta_m, gamma / 2.0)?;
    let l0 = expected_margin_loss_from_logits(model.forward(z_0)?.view(), eta_0, gamma)?;
    let lhs = lm - l0;
    let rhs = c * k as f64 * epsilon_m;
    Ok(LemmaCheck { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption3Status {
    Evaluated,
    InsufficientMass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assumption3Result {
    pub status: Assumption3Status,
    pub conditional_prob_estimate: f64,
    pub std_err: f64,
    /// `exp(-N_0^{2 alpha})`.
    pub threshold: f64,
    pub plausible: Option<bool>,
    pub conditioning_draws: usize,
    pub total_draws: usize,
    pub conditioning_mass: f64,
}

const A3_MIN_CONDITIONED: usize = 500;
const A3_BATCH: usize = 1000;

/// Rejection-sampled estimate of
/// `P(L^{gamma/4}_m - L^{gamma/2}_0 > N_0^{-alpha} + c K eps | T_h^L eps > gamma / 8)`
/// under the prior. Reports; never asserts.
pub fn assumption3_check(
    prior: &PriorSpec,
    world: &AssumptionWorld,
    cfg: &BoundConfig,
    max_draws: usize,
) -> Result<Assumption3Result> {
    cfg.validate()?;
    let gamma = cfg
        .gamma
        .ok_or_else(|| Error::invalid("assumption 3 check needs an explicit gamma"))?;
    let z = world.z.matrix();
    let z0 = z.select(Axis(0), &world.train);
    let zm = z.select(Axis(0), &world.test);
    let eta = world.eta.eta();
    let eta0 = eta.select(Axis(0), &world.train);
    let etam = eta.select(Axis(0), &world.test);
    let n_0 = world.train.len() as f64;
    let eps = world.epsilon_m;
    let k = world.bundle.num_classes() as f64;
    let margin = n_0.powf(-cfg.alpha) + cfg.c * k * eps;
    let depth = prior.depth() as i32;

    let mut conditioned = 0usize;
    let mut exceed = 0usize;
    let mut total = 0usize;
    while total < max_draws && conditioned < A3_MIN_CONDITIONED {
        let batch = A3_BATCH.min(max_draws - total);
        let outcomes = seeded_draws(batch, cfg.seed.wrapping_add(total as u64), |s| -> Result<Option<bool>> {
            let h = sample_prior(prior, s)?;
            let t_h = h.weight_norms()?.max_spectral;
            if t_h.powi(depth) * eps <= gamma / 8.0 {
                return Ok(None);
            }
            let lm = expected_margin_loss_from_logits(h.forward(zm.view())?.view(), etam.view(), gamma / 4.0)?;
            let l0 = expected_margin_loss_from_logits(h.forward(z0.view())?.view(), eta0.view(), gamma / 2.0)?;
            Ok(Some(lm - l0 > margin))
        });
        for o in outcomes {
            if let Some(hit) = o? {
                conditioned += 1;
                exceed += usize::from(hit);
            }
        }
        total += batch;
    }
    if conditioned == 0 {
        return Err(Error::InsufficientMass(format!(
            "conditioning event T_h^L eps_m > gamma/8 never sampled in {total} draws"
        )));
    }
    let p = exceed as f64 / conditioned as f64;
    let se = (p * (1.0 - p) / conditioned as f64).sqrt();
    let threshold = (-n_0.powf(2.0 * cfg.alpha)).exp();
    let enough = conditioned >= A3_MIN_CONDITIONED;
    Ok(Assumption3Result {
        status: if enough { Assumption3Status::Evaluated } else { Assumption3Status::InsufficientMass },
        conditional_prob_estimate: p,
        std_err: se,
        threshold,
        plausible: enough.then_some(p <= threshold + 3.0 * se),
        conditioning_draws: conditioned,
        total_draws: total,
        conditioning_mass: conditioned as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbationCheck {
    pub prob_estimate: f64,
    pub std_err: f64,
    pub sigma_threshold: f64,
    pub trials: usize,
}

/// Frequency with which a Gaussian weight perturbation moves every output by
/// less than `gamma / 8` in sup norm, for `sigma` at or below
/// `gamma / (84 L B beta^{L-1} sqrt(b ln 4bL))`.
pub fn perturbation_half_check(
    center: &MlpClassifier,
    sigma: f64,
    rows: ArrayView2<f64>,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<PerturbationCheck> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive; at gamma = 0 the event is empty"));
    }
    if trials == 0 || rows.nrows() == 0 {
        return Err(Error::invalid("need at least one trial and one row"));
    }
    let sigma_threshold = perturbation_sigma_limit(center, rows, gamma)?;
    if !(sigma >= 0.0) || sigma > sigma_threshold * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "sigma {sigma} is above the perturbation threshold {sigma_threshold}"
        )));
    }
    let base = center.forward(rows)?;
    let hits = seeded_draws(trials, seed, |s| -> Result<bool> {
        if sigma == 0.0 {
            return Ok(true);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let h = center.perturbed(&gaussian_layers(center, sigma, &mut rng))?;
        let out = h.forward(rows)?;
        let worst = (&out - &base).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(worst < gamma / 8.0)
    })
    .into_iter()
    .collect::<Result<Vec<bool>>>()?
    .into_iter()
    .filter(|&h| h)
    .count();
    let p = hits as f64 / trials as f64;
    Ok(PerturbationCheck {
        prob_estimate: p,
        std_err: (p * (1.0 - p) / trials as f64).sqrt(),
        sigma_threshold,
        trials,
    })
}

pub(crate) fn perturbation_sigma_limit(center: &MlpClassifier, rows: ArrayView2<f64>, gamma: f64) -> Result<f64> {
    let depth = center.depth() as f64;
    let b = center.max_width() as f64;
    let b_m = rows
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    let beta = center.weight_norms()?.spectral_product.powf(1.0 / depth);
    Ok(gamma / (84.0 * depth * b_m * beta.powi(center.depth() as i32 - 1) * (b * (4.0 * b * depth).ln()).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn log_mean_exp_is_stable_and_exact_on_zeros() {
        let est = log_mean_exp(&[0.0; 10]);
        assert_eq!(est.estimate, 0.0);
        assert_eq!(est.std_err, 0.0);
        let big = log_mean_exp(&[1000.0, 1000.0]);
        assert!((big.estimate - 1000.0).abs() < 1e-12);
        let mixed = log_mean_exp(&[0.0, 2f64.ln()]);
        assert!((mixed.estimate - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn spectral_tail_extremes() {
        let huge = spectral_tail_check(0.1, 4, 4, 4, 10.0, 10_000, 1).unwrap();
        assert!(huge.analytic_bound < 1e-6);
        assert_eq!(huge.empirical_prob, 0.0);
        let zero = spectral_tail_check(0.1, 4, 4, 4, 0.0, 1000, 1).unwrap();
        assert_eq!(zero.empirical_prob, 1.0);
        assert_eq!(zero.analytic_bound, 8.0);
        assert!(spectral_tail_check(0.1, 4, 4, 4, 1.0, 999, 1).is_err());
        assert!(spectral_tail_check(0.1, 2, 4, 4, 1.0, 1000, 1).is_err());
    }

    #[test]
    fn spectral_tail_eight_by_eight() {
        let r = spectral_tail_check(0.1, 8, 8, 8, 1.5, 10_000, 7).unwrap();
        assert!(r.empirical_prob <= r.analytic_bound + 3.0 * r.std_err);
    }

    #[test]
    fn identical_groups_zero_discrepancy() {
        let z = array![[1.0, 0.5], [-0.3, 2.0], [0.7, -1.1]];
        let eta = array![[0.6, 0.4], [0.1, 0.9], [0.5, 0.5]];
        let prior = PriorSpec::new(0.8, vec![2, 5, 2]).unwrap();
        let d = discrepancy_mc(&prior, z.view(), eta.view(), z.view(), eta.view(), 0.0, 3.0, 200, 5).unwrap();
        assert_eq!(d.estimate, 0.0);
        let d = discrepancy_mc(&prior, z.view(), eta.view(), z.view(), eta.view(), 0.4, 3.0, 200, 5).unwrap();
        assert!(d.estimate <= 0.0);
        assert!(discrepancy_mc(&prior, z.view(), eta.view(), z.view(), eta.view(), 0.4, 3.0, 99, 5).is_err());
    }

    #[test]
    fn lemma_check_zero_distance_and_hypothesis() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let eta = array![[0.7, 0.3], [0.2, 0.8]];
        let small = MlpClassifier::new(vec![array![[0.1, 0.0], [0.0, 0.1]]]).unwrap();
        let r = lemma_loss_diff_check(&small, z.view(), eta.view(), z.view(), eta.view(), 1.0, 0.5, 2, 0.0).unwrap();
        assert!(r.lhs <= 0.0 && r.rhs == 0.0 && r.holds);
        let big = MlpClassifier::new(vec![array![[10.0, 0.0], [0.0, 10.0]]]).unwrap();
        let err = lemma_loss_diff_check(&big, z.view(), eta.view(), z.view(), eta.view(), 1.0, 0.5, 2, 0.1);
        assert!(matches!(err, Err(Error::HypothesisNotMet(_))));
    }

    #[test]
    fn perturbation_limits() {
        let center = MlpClassifier::new(vec![
            array![[1.0, 0.5], [-0.5, 1.0], [0.2, 0.3]],
            array![[1.0, -1.0, 0.5], [0.3, 0.8, -0.2]],
        ])
        .unwrap();
        let rows = array![[1.0, 0.0], [0.3, -0.7]];
        let r = perturbation_half_check(&center, 0.0, rows.view(), 1.0, 100, 1).unwrap();
        assert_eq!(r.prob_estimate, 1.0);
        assert!(perturbation_half_check(&center, 0.0, rows.view(), 0.0, 100, 1).is_err());
        let limit = r.sigma_threshold;
        assert!(perturbation_half_check(&center, limit * 2.0, rows.view(), 1.0, 100, 1).is_err());
        let at = perturbation_half_check(&center, limit, rows.view(), 1.0, 2000, 3).unwrap();
        assert!(at.prob_estimate > 0.5 - 3.0 * at.std_err);
        let _ = Array2::<f64>::zeros((1, 1));
    }
}
