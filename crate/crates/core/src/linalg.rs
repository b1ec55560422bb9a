use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const SPECTRAL_TOL: f64 = 1e-9;
pub const SPECTRAL_MAX_ITER: usize = 10_000;

pub fn frobenius_norm(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on `W^T W`.
///
/// Stops when the relative change of the estimate drops below `SPECTRAL_TOL`.
/// The start vector is drawn from a fixed seed so the result is reproducible
/// and almost surely not orthogonal to the top singular vector.
pub fn spectral_norm(w: &Array2<f64>) -> Result<f64> {
    let cols = w.ncols();
    if cols == 0 || w.nrows() == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0bec);
    let mut v: Array1<f64> = (0..cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0;
    for _ in 0..SPECTRAL_MAX_ITER {
        let u = w.dot(&v);
        let next = u.dot(&u).sqrt();
        if next == 0.0 {
            return Ok(0.0);
        }
        let mut x = w.t().dot(&u);
        let xn = x.dot(&x).sqrt();
        if xn == 0.0 {
            return Ok(next);
        }
        x /= xn;
        v = x;
        if (next - estimate).abs() <= SPECTRAL_TOL * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NoConvergence(format!(
        "spectral norm power iteration exceeded {SPECTRAL_MAX_ITER} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_and_identity() {
        let w = array![[3.0, 0.0], [0.0, 1.0]];
        assert!((spectral_norm(&w).unwrap() - 3.0).abs() < 1e-9);
        assert!((frobenius_norm(&w) - 10f64.sqrt()).abs() < 1e-15);
        let eye = Array2::<f64>::eye(4);
        assert!((spectral_norm(&eye).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antisymmetric_row_vector() {
        // (1, -1) is orthogonal to the all-ones start a naive version would use.
        let w = array![[1.0, -1.0]];
        assert!((spectral_norm(&w).unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(spectral_norm(&Array2::zeros((3, 2))).unwrap(), 0.0);
    }
}
