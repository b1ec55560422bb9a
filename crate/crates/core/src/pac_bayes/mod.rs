//! Gaussian priors over MLP weights, the subgroup bound arithmetic, and the
//! Monte-Carlo checks of the lemmas the bound rests on.

mod bounds;
mod checks;
mod table;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MlpClassifier;

pub use bounds::{
    covering_count, default_gamma, prior_sigma, theorem1_rhs, theorem2_rhs, theorem3_concrete, BoundConfig,
    BoundReport, LabelInfo, SIGMA_FALLBACK,
};
pub use checks::{
    assumption3_check, discrepancy_mc, lemma_loss_diff_check, perturbation_half_check, spectral_tail_check,
    Assumption3Result, Assumption3Status, DiscrepancyEstimate, LemmaCheck, PerturbationCheck, SpectralTailResult,
};
pub use table::{a5_loss_diff_term, a5_positive_area_mc, A5MonteCarlo};

/// Isotropic zero-mean Gaussian over the vectorized weights of an MLP with the
/// given layer sizes `[input, hidden.., classes]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub sigma: f64,
    pub dims: Vec<usize>,
}

impl PriorSpec {
    pub fn new(sigma: f64, dims: Vec<usize>) -> Result<Self> {
        let spec = Self { sigma, dims };
        spec.validate()?;
        Ok(spec)
    }

    /// Same architecture as `model`.
    pub fn matching(model: &MlpClassifier, sigma: f64) -> Result<Self> {
        let mut dims = vec![model.input_dim()];
        dims.extend(model.layers().iter().map(|w| w.nrows()));
        Self::new(sigma, dims)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("prior sigma must be positive, got {}", self.sigma)));
        }
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(Error::invalid("prior architecture needs at least two positive sizes"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn max_width(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(0)
    }
}

/// Posterior: the trained weights plus isotropic Gaussian perturbation.
#[derive(Debug, Clone)]
pub struct PosteriorSpec {
    pub center: MlpClassifier,
    pub sigma: f64,
}

impl PosteriorSpec {
    pub fn new(center: MlpClassifier, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("posterior sigma must be positive, got {sigma}")));
        }
        Ok(Self { center, sigma })
    }

    pub fn sample(&self, seed: u64) -> Result<MlpClassifier> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = gaussian_layers(&self.center, self.sigma, &mut rng);
        self.center.perturbed(&noise)
    }
}

/// One draw from the prior; every entry i.i.d. `N(0, sigma^2)`.
pub fn sample_prior(spec: &PriorSpec, seed: u64) -> Result<MlpClassifier> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .dims
        .windows(2)
        .map(|d| gaussian_matrix(d[1], d[0], spec.sigma, &mut rng))
        .collect();
    MlpClassifier::new(layers)
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    })
}

pub(crate) fn gaussian_layers(model: &MlpClassifier, sigma: f64, rng: &mut impl Rng) -> Vec<Array2<f64>> {
    model
        .layers()
        .iter()
        .map(|w| gaussian_matrix(w.nrows(), w.ncols(), sigma, rng))
        .collect()
}

/// Runs `f(seed + i)` for `i in 0..n` in parallel and returns results in
/// index order, so folds over the output do not depend on the worker count.
pub(crate) fn seeded_draws<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(seed.wrapping_add(i)))
        .collect()
}

/// Mean and standard error of the mean. `None` std err for fewer than two values.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}
