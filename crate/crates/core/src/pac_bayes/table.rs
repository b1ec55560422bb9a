use ndarray::{Array1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::seeded_draws;
use crate::error::{Error, Result};
use crate::model::check_distribution_rows;

#[derive(Clone, Copy)]
enum Band {
    Above,
    Below,
    Middle,
}

fn band(x: f64, half_width: f64) -> Band {
    if x > half_width {
        Band::Above
    } else if x < -half_width {
        Band::Below
    } else {
        Band::Middle
    }
}

/// Per-node loss difference of a binary linear classifier, as a function of
/// `dz = Z_i . dW` and `dz_eps = (Z_i + eps_i) . dW`. Band edges belong to the
/// middle band.
pub fn a5_loss_diff_term(dz: f64, dz_eps: f64, gamma: f64, eta1: f64, eta2: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if !(0.0..=1.0).contains(&eta1) || !(0.0..=1.0).contains(&eta2) || (eta1 + eta2 - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("({eta1}, {eta2}) is not a distribution")));
    }
    Ok(table_value(band(dz, gamma / 2.0), band(dz_eps, gamma / 4.0), eta1, eta2))
}

fn table_value(col: Band, row: Band, eta1: f64, eta2: f64) -> f64 {
    match (row, col) {
        (Band::Above, Band::Above) | (Band::Below, Band::Below) | (Band::Middle, Band::Middle) => 0.0,
        (Band::Above, Band::Below) => eta2 - eta1,
        (Band::Above, Band::Middle) => -eta1,
        (Band::Below, Band::Above) => eta1 - eta2,
        (Band::Below, Band::Middle) => -eta2,
        (Band::Middle, Band::Above) => eta1,
        (Band::Middle, Band::Below) => eta2,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct A5MonteCarlo {
    /// Mean over draws of the node-averaged table value.
    pub mean_loss_diff: f64,
    /// Fraction of draws whose node-averaged value exceeds `c K eps_m + N_0^-alpha`.
    pub frac_positive_draws: f64,
    pub threshold: f64,
    pub trials: usize,
}

/// Monte-Carlo over `dW ~ N(0, 2 sigma^2 I)` of the binary table sum, with
/// `eta` evaluated at the test rows `Z_0 + eps`.
#[allow(clippy::too_many_arguments)]
pub fn a5_positive_area_mc(
    z_0: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    eta: ArrayView2<f64>,
    gamma: f64,
    sigma: f64,
    c: f64,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<A5MonteCarlo> {
    if eta.ncols() != 2 {
        return Err(Error::invalid(format!("the table applies to K = 2, got K = {}", eta.ncols())));
    }
    if z_0.dim() != eps.dim() || eta.nrows() != z_0.nrows() || z_0.nrows() == 0 {
        return Err(Error::Dimension("Z_0, eps and eta must have matching non-empty rows".into()));
    }
    if !(gamma > 0.0) || !(sigma > 0.0) || trials == 0 {
        return Err(Error::invalid("gamma, sigma and trials must be positive"));
    }
    check_distribution_rows(eta)?;
    let n_0 = z_0.nrows() as f64;
    let eps_m = eps.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
    let threshold = c * 2.0 * eps_m + n_0.powf(-alpha);
    let z_m = &z_0 + &eps;
    let scale = std::f64::consts::SQRT_2 * sigma;
    let sums = seeded_draws(trials, seed, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dw = Array1::from_shape_fn(z_0.ncols(), |_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            scale * g
        });
        let dz = z_0.dot(&dw);
        let dze = z_m.dot(&dw);
        let total: f64 = (0..z_0.nrows())
            .map(|i| {
                table_value(
                    band(dz[i], gamma / 2.0),
                    band(dze[i], gamma / 4.0),
                    eta[[i, 0]],
                    eta[[i, 1]],
                )
            })
            .sum();
        total / n_0
    });
    let positive = sums.iter().filter(|&&v| v > threshold).count();
    Ok(A5MonteCarlo {
        mean_loss_diff: sums.iter().sum::<f64>() / trials as f64,
        frac_positive_draws: positive as f64 / trials as f64,
        threshold,
        trials,
    })
}
