use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{discrepancy_mc, seeded_draws, PosteriorSpec, PriorSpec};
use crate::aggregate::AggregatedFeatures;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::model::{empirical_margin_loss, expected_margin_loss_exact, margins, MlpClassifier};
use crate::subgroup::build_near_sets;

/// Prior std used when `epsilon_m = 0` makes the admissible sigma unbounded.
pub const SIGMA_FALLBACK: f64 = 1.0;
const GAMMA_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundConfig {
    /// Margin. `None` picks the median training margin, floored at 0.1.
    pub gamma: Option<f64>,
    pub alpha: f64,
    /// `None` means `N_0^{2 alpha}`.
    pub lambda: Option<f64>,
    pub delta: f64,
    /// Lipschitz constant of the label distribution.
    pub c: f64,
    /// Draws for the discrepancy estimate; 0 skips it.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { gamma: None, alpha: 0.2, lambda: None, delta: 0.05, c: 1.0, mc_samples: 1000, seed: 0 }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.25) {
            return Err(Error::invalid(format!("alpha must be in (0, 0.25), got {}", self.alpha)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if let Some(g) = self.gamma {
            if g == 0.0 {
                return Err(Error::invalid(
                    "gamma = 0 makes the covering count L C (2 B_m)^{1/L} / gamma^{1/L} undefined",
                ));
            }
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!("gamma must be positive, got {g}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("c must be non-negative, got {}", self.c)));
        }
        Ok(())
    }
}

/// Where the per-node label distribution comes from.
#[derive(Debug, Clone)]
pub enum LabelInfo {
    /// Exact `eta` rows for every node (synthetic worlds).
    Known(Array2<f64>),
    /// Only sampled labels are known; point masses stand in for `eta`.
    Empirical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon_m: f64,
    #[serde(rename = "B_m")]
    pub b_m: f64,
    #[serde(rename = "C")]
    pub c_max_frobenius: f64,
    pub s_m: Option<usize>,
    pub assumption2_holds: bool,
    #[serde(rename = "T_h")]
    pub t_h: f64,
    pub beta_tilde: f64,
    pub depth: usize,
    pub max_width: usize,
    pub n_0: usize,
    pub n_m: usize,
    pub num_classes: usize,
    pub gamma: f64,
    pub gamma_is_default: bool,
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    pub lipschitz_c: f64,
    /// True when `c` was supplied by the user rather than certified by construction.
    pub c_assumed: bool,
    /// True when point-mass labels stand in for the unknown `eta`.
    pub labels_empirical: bool,
    pub train_margin_loss: f64,
    pub posterior_train_margin_loss: Option<f64>,
    pub sigma: f64,
    pub sigma_fallback: bool,
    /// Perturbation std below which the weight-perturbation lemma applies.
    pub sigma_perturbation_limit: f64,
    pub kl_upper_bound: f64,
    /// `D^{gamma/2}_{m,0}` estimate, the term in the deterministic bound.
    pub discrepancy_estimate: Option<f64>,
    pub discrepancy_std_err: Option<f64>,
    /// `D^{gamma}_{m,0}` estimate, the term in the stochastic bound.
    pub discrepancy_full_gamma_estimate: Option<f64>,
    pub discrepancy_bound: f64,
    pub theorem1_rhs: Option<f64>,
    pub theorem2_rhs: Option<f64>,
    pub theorem3_concrete_rhs: f64,
    pub theorem3_covered_rhs: f64,
    pub covering_count: f64,
    pub covering_betas: f64,
    pub observed_test_risk: f64,
    pub expected_test_risk: Option<f64>,
}

/// Largest admissible prior std: `sigma^2 = (gamma / 8 eps)^{2/L} / (2 b (lambda N_0^{-alpha} + ln 2bL))`.
pub fn prior_sigma(
    gamma: f64,
    epsilon_m: f64,
    depth: usize,
    max_width: usize,
    lambda: f64,
    n_0: usize,
    alpha: f64,
) -> Result<f64> {
    if epsilon_m == 0.0 {
        return Err(Error::invalid(format!(
            "epsilon_m = 0 leaves sigma unbounded; use the fallback sigma {SIGMA_FALLBACK}"
        )));
    }
    if !(gamma >= 0.0 && epsilon_m > 0.0 && lambda > 0.0 && alpha > 0.0) || depth == 0 || max_width == 0 || n_0 == 0 {
        return Err(Error::invalid("prior_sigma arguments must be positive"));
    }
    let l = depth as f64;
    let b = max_width as f64;
    let num = (gamma / (8.0 * epsilon_m)).powf(2.0 / l);
    let den = 2.0 * b * (lambda * (n_0 as f64).powf(-alpha) + (2.0 * b * l).ln());
    Ok((num / den).sqrt())
}

fn check_common(lambda: f64, n_0: usize, delta: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta must be in (0, 1]"));
    }
    if n_0 == 0 {
        return Err(Error::invalid("N_0 must be positive"));
    }
    Ok(())
}

/// Stochastic-classifier bound:
/// `L0 + (KL + ln(1/delta) + lambda^2 / 4 N_0 + D) / lambda`.
pub fn theorem1_rhs(train_margin_loss: f64, kl: f64, lambda: f64, n_0: usize, delta: f64, discrepancy: f64) -> Result<f64> {
    check_common(lambda, n_0, delta)?;
    let n_0 = n_0 as f64;
    Ok(train_margin_loss + (kl + (1.0 / delta).ln() + lambda * lambda / (4.0 * n_0) + discrepancy) / lambda)
}

/// Deterministic-classifier bound: the KL term becomes `2 (KL + 1)` and the
/// discrepancy is taken at `gamma / 2`.
pub fn theorem2_rhs(
    train_margin_loss: f64,
    kl: f64,
    lambda: f64,
    n_0: usize,
    delta: f64,
    discrepancy_half_gamma: f64,
) -> Result<f64> {
    check_common(lambda, n_0, delta)?;
    let n_0 = n_0 as f64;
    Ok(train_margin_loss
        + (2.0 * (kl + 1.0) + (1.0 / delta).ln() + lambda * lambda / (4.0 * n_0) + discrepancy_half_gamma) / lambda)
}

/// `L C (2 B_m)^{1/L} / gamma^{1/L}`, the number of `beta` values needed to
/// cover every relevant weight scale.
pub fn covering_count(depth: usize, c_max_frobenius: f64, b_m: f64, gamma: f64) -> f64 {
    let l = depth as f64;
    l * c_max_frobenius * (2.0 * b_m).powf(1.0 / l) / gamma.powf(1.0 / l)
}

/// Median training margin, floored at 0.1.
pub fn default_gamma(model: &MlpClassifier, z_train: ndarray::ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let logits = model.forward(z_train)?;
    let mut m = margins(logits.view(), labels);
    if m.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    m.sort_by(f64::total_cmp);
    let n = m.len();
    let median = if n % 2 == 1 { m[n / 2] } else { 0.5 * (m[n / 2 - 1] + m[n / 2]) };
    Ok(median.max(GAMMA_FLOOR))
}

/// Every quantity of the GNN subgroup bound for one subgroup `V_m`, using the
/// explicit single-`beta` form `L0 + cK eps + 2 KL / lambda + (ln(3/delta) + 2) / lambda
/// + lambda / 4 N_0` (equal to the proof's line at `lambda = N_0^{2 alpha}`) and its
/// union-bounded variant with `delta / covering_count`.
pub fn theorem3_concrete(
    model: &MlpClassifier,
    z: &AggregatedFeatures,
    labels: &[usize],
    label_info: &LabelInfo,
    train: &[NodeId],
    test: &[NodeId],
    cfg: &BoundConfig,
) -> Result<BoundReport> {
    cfg.validate()?;
    let near = build_near_sets(z, train, test)?;
    let epsilon_m = near.epsilon_m;
    let n_0 = train.len();
    let k = model.num_classes();
    let depth = model.depth();
    let b = model.max_width();

    let z0 = z.select_rows(train);
    let zm = z.select_rows(test);
    let y0: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let ym: Vec<usize> = test.iter().map(|&i| labels[i]).collect();

    let (gamma, gamma_is_default) = match cfg.gamma {
        Some(g) => (g, false),
        None => (default_gamma(model, z0.view(), &y0)?, true),
    };
    let lambda = cfg.lambda.unwrap_or_else(|| (n_0 as f64).powf(2.0 * cfg.alpha));

    let b_m = train
        .iter()
        .chain(test)
        .map(|&i| z.row_norms()[i])
        .fold(0.0, f64::max);
    let norms = model.weight_norms()?;
    let beta_tilde = norms.spectral_product.powf(1.0 / depth as f64);

    let (sigma, sigma_fallback) = if epsilon_m > 0.0 {
        (prior_sigma(gamma, epsilon_m, depth, b, lambda, n_0, cfg.alpha)?, false)
    } else {
        (SIGMA_FALLBACK, true)
    };
    let sigma_perturbation_limit = gamma
        / (84.0
            * depth as f64
            * b_m
            * beta_tilde.powi(depth as i32 - 1)
            * (b as f64 * (4.0 * b as f64 * depth as f64).ln()).sqrt());

    let sq_frob: f64 = norms.frobenius.iter().map(|f| f * f).sum();
    let kl = sq_frob / (2.0 * sigma * sigma);

    let train_margin_loss = empirical_margin_loss(model, z0.view(), &y0, gamma)?;
    let observed_test_risk = empirical_margin_loss(model, zm.view(), &ym, 0.0)?;

    let (eta0, etam) = match label_info {
        LabelInfo::Known(eta) => (eta.select(Axis(0), train), eta.select(Axis(0), test)),
        LabelInfo::Empirical => (one_hot(&y0, k), one_hot(&ym, k)),
    };
    let expected_test_risk = match label_info {
        LabelInfo::Known(_) => Some(expected_margin_loss_exact(model, zm.view(), etam.view(), 0.0)?),
        LabelInfo::Empirical => None,
    };

    let mut discrepancy_estimate = None;
    let mut discrepancy_std_err = None;
    let mut discrepancy_full_gamma_estimate = None;
    let mut posterior_train_margin_loss = None;
    let mut theorem1 = None;
    let mut theorem2 = None;
    if cfg.mc_samples > 0 {
        let prior = PriorSpec::matching(model, sigma)?;
        let half = discrepancy_mc(
            &prior,
            zm.view(),
            etam.view(),
            z0.view(),
            eta0.view(),
            gamma / 2.0,
            lambda,
            cfg.mc_samples,
            cfg.seed,
        )?;
        let full = discrepancy_mc(
            &prior,
            zm.view(),
            etam.view(),
            z0.view(),
            eta0.view(),
            gamma,
            lambda,
            cfg.mc_samples,
            cfg.seed,
        )?;
        let posterior = PosteriorSpec::new(model.clone(), sigma)?;
        let losses = seeded_draws(cfg.mc_samples, cfg.seed ^ 0x9e37_79b9, |s| {
            posterior
                .sample(s)
                .and_then(|h| empirical_margin_loss(&h, z0.view(), &y0, gamma))
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let q_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        theorem1 = Some(theorem1_rhs(q_loss, kl, lambda, n_0, cfg.delta, full.estimate)?);
        theorem2 = Some(theorem2_rhs(train_margin_loss, kl, lambda, n_0, cfg.delta, half.estimate)?);
        discrepancy_estimate = Some(half.estimate);
        discrepancy_std_err = Some(half.std_err);
        discrepancy_full_gamma_estimate = Some(full.estimate);
        posterior_train_margin_loss = Some(q_loss);
    }

    let discrepancy_bound = 3f64.ln() + lambda * cfg.c * k as f64 * epsilon_m;
    let single = theorem2_rhs(train_margin_loss, kl, lambda, n_0, cfg.delta, discrepancy_bound)?;
    let count = covering_count(depth, norms.max_frobenius, b_m, gamma);
    let betas = count.ceil().max(1.0);
    let covered = theorem2_rhs(train_margin_loss, kl, lambda, n_0, cfg.delta / betas, discrepancy_bound)?;

    let labels_empirical = matches!(label_info, LabelInfo::Empirical);
    Ok(BoundReport {
        epsilon_m,
        b_m,
        c_max_frobenius: norms.max_frobenius,
        s_m: near.s_m,
        assumption2_holds: near.assumption2_holds,
        t_h: norms.max_spectral,
        beta_tilde,
        depth,
        max_width: b,
        n_0,
        n_m: test.len(),
        num_classes: k,
        gamma,
        gamma_is_default,
        alpha: cfg.alpha,
        lambda,
        delta: cfg.delta,
        lipschitz_c: cfg.c,
        c_assumed: labels_empirical,
        labels_empirical,
        train_margin_loss,
        posterior_train_margin_loss,
        sigma,
        sigma_fallback,
        sigma_perturbation_limit,
        kl_upper_bound: kl,
        discrepancy_estimate,
        discrepancy_std_err,
        discrepancy_full_gamma_estimate,
        discrepancy_bound,
        theorem1_rhs: theorem1,
        theorem2_rhs: theorem2,
        theorem3_concrete_rhs: single,
        theorem3_covered_rhs: covered,
        covering_count: count,
        covering_betas: betas,
        observed_test_risk,
        expected_test_risk,
    })
}

pub(crate) fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), k));
    for (i, &y) in labels.iter().enumerate() {
        m[[i, y]] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_sigma_worked_value() {
        let s = prior_sigma(8.0, 1.0, 1, 1, 1.0, 1, 0.2).unwrap();
        let expected_sq = 1.0 / (2.0 * (1.0 + 2f64.ln()));
        assert!((s * s - expected_sq).abs() < 1e-15);
        assert!((s - 0.543423).abs() < 1e-6);
        assert!((s * s - 0.295308).abs() < 1e-6);
    }

    #[test]
    fn prior_sigma_limits_and_monotonicity() {
        assert!(prior_sigma(1e-12, 1.0, 2, 4, 1.0, 10, 0.2).unwrap() < 1e-5);
        assert_eq!(prior_sigma(0.0, 1.0, 2, 4, 1.0, 10, 0.2).unwrap(), 0.0);
        let a = prior_sigma(1.0, 0.5, 2, 4, 3.0, 10, 0.2).unwrap();
        let b = prior_sigma(1.0, 0.5, 2, 8, 3.0, 10, 0.2).unwrap();
        assert!(b < a);
        assert!(prior_sigma(1.0, 0.0, 2, 4, 3.0, 10, 0.2).is_err());
    }

    #[test]
    fn theorem_worked_values() {
        let t1 = theorem1_rhs(0.0, 0.0, 10.0, 100, 0.5, 0.0).unwrap();
        assert!((t1 - (2f64.ln() + 0.25) / 10.0).abs() < 1e-15);
        assert!((t1 - 0.094315).abs() < 1e-6);
        let t2 = theorem2_rhs(0.0, 0.0, 10.0, 100, 0.5, 0.0).unwrap();
        assert!((t2 - 0.294315).abs() < 1e-6);
    }

    #[test]
    fn theorem_algebraic_identities() {
        let (loss, kl, lam, n0, delta, d) = (0.1, 3.7, 6.0, 50, 0.2, 0.4);
        let base = theorem1_rhs(loss, kl, lam, n0, delta, d).unwrap();
        let shifted = theorem1_rhs(loss, kl, lam, n0, delta, d + lam * 0.3).unwrap();
        assert!((shifted - base - 0.3).abs() < 1e-12);
        let t2 = theorem2_rhs(loss, kl, lam, n0, delta, d).unwrap();
        assert!((t2 - base - (kl + 2.0) / lam).abs() < 1e-12);
        let no_delta = theorem1_rhs(0.0, 0.0, 2.0, 1, 1.0, 0.0).unwrap();
        assert!((no_delta - 4.0 / 4.0 / 2.0).abs() < 1e-15);
        let doubled_kl_part = |l: f64| (kl + (1.0 / delta).ln()) / l;
        assert!((doubled_kl_part(2.0 * lam) - doubled_kl_part(lam) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_names_covering_count() {
        let cfg = BoundConfig { gamma: Some(0.0), ..Default::default() };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("covering count"), "{err}");
        let cfg = BoundConfig { alpha: 0.3, ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("alpha must be in (0, 0.25)"));
    }
}
