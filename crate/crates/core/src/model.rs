//! Bias-free ReLU MLP applied row-wise to aggregated features, plus the
//! margin losses it is evaluated with.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, spectral_norm};

/// Layer `l` is stored as an `out x in` matrix, so a batch of rows maps as
/// `H_l = relu(H_{l-1} W_l^T)` with no activation after the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightNorms {
    pub frobenius: Vec<f64>,
    pub spectral: Vec<f64>,
    /// `T_h`, the largest layer spectral norm.
    pub max_spectral: f64,
    pub spectral_product: f64,
    /// `C`, the largest layer Frobenius norm.
    pub max_frobenius: f64,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    layers: Vec<LayerRecord>,
}

impl MlpClassifier {
    pub fn new(layers: Vec<Array2<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a classifier needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::Dimension(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    l + 1,
                    pair[0].nrows(),
                    l + 2,
                    pair[1].ncols()
                )));
            }
        }
        if layers.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("classifier weights must be finite"));
        }
        if layers.last().unwrap().nrows() < 2 {
            return Err(Error::invalid("classifier needs at least two outputs"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().nrows()
    }

    /// `b`: the largest dimension of any weight matrix. Including the input
    /// and output sizes keeps the Gaussian spectral tail valid for every layer.
    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|w| w.nrows().max(w.ncols()))
            .max()
            .unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(Array2::len).sum()
    }

    /// Raw logits, one row per input row.
    pub fn forward(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, model expects {}",
                rows.ncols(),
                self.input_dim()
            )));
        }
        let mut h = rows.to_owned();
        let last = self.layers.len() - 1;
        for (l, w) in self.layers.iter().enumerate() {
            h = h.dot(&w.t());
            if l < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn predict(&self, rows: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.forward(rows)?.rows().into_iter().map(argmax).collect())
    }

    pub fn weight_norms(&self) -> Result<WeightNorms> {
        let frobenius: Vec<f64> = self.layers.iter().map(frobenius_norm).collect();
        let spectral = self
            .layers
            .iter()
            .map(spectral_norm)
            .collect::<Result<Vec<f64>>>()?;
        Ok(WeightNorms {
            max_spectral: spectral.iter().copied().fold(0.0, f64::max),
            spectral_product: spectral.iter().product(),
            max_frobenius: frobenius.iter().copied().fold(0.0, f64::max),
            frobenius,
            spectral,
        })
    }

    /// Elementwise `self + other`; shapes must agree.
    pub fn perturbed(&self, noise: &[Array2<f64>]) -> Result<Self> {
        if noise.len() != self.layers.len()
            || noise.iter().zip(&self.layers).any(|(u, w)| u.dim() != w.dim())
        {
            return Err(Error::Dimension("perturbation shapes do not match the model".into()));
        }
        Self::new(self.layers.iter().zip(noise).map(|(w, u)| w + u).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            layers: self
                .layers
                .iter()
                .map(|w| LayerRecord {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    weights: w.iter().copied().collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        let layers = ck
            .layers
            .into_iter()
            .map(|r| {
                Array2::from_shape_vec((r.rows, r.cols), r.weights)
                    .map_err(|e| Error::Dimension(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }
}

/// Index of the largest entry, ties to the smallest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// `1{h[k] <= gamma + max_{j != k} h[j]}`.
pub fn margin_violated(logits: ArrayView1<f64>, k: usize, gamma: f64) -> bool {
    let runner_up = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    logits[k] <= gamma + runner_up
}

/// `h[y] - max_{k != y} h[k]` for each row.
pub fn margins(logits: ArrayView2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let runner_up = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != y)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            row[y] - runner_up
        })
        .collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Empirical margin loss of precomputed logits.
pub fn margin_loss_from_logits(logits: ArrayView2<f64>, labels: &[usize], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if logits.nrows() == 0 {
        return Err(Error::invalid("margin loss over an empty node set"));
    }
    if labels.len() != logits.nrows() {
        return Err(Error::Dimension("one label per logit row required".into()));
    }
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| margin_violated(row.view(), y, gamma))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn empirical_margin_loss(
    model: &MlpClassifier,
    rows: ArrayView2<f64>,
    labels: &[usize],
    gamma: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    if rows.nrows() == 0 {
        return Err(Error::invalid("margin loss over an empty node set"));
    }
    margin_loss_from_logits(model.forward(rows)?.view(), labels, gamma)
}

/// Expected margin loss of precomputed logits when the label distribution
/// per row is known.
pub fn expected_margin_loss_from_logits(logits: ArrayView2<f64>, eta: ArrayView2<f64>, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if logits.nrows() == 0 {
        return Err(Error::invalid("margin loss over an empty node set"));
    }
    if eta.dim() != logits.dim() {
        return Err(Error::Dimension(format!(
            "label field is {:?}, logits are {:?}",
            eta.dim(),
            logits.dim()
        )));
    }
    check_distribution_rows(eta)?;
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(eta.rows())
        .map(|(h, p)| {
            p.iter()
                .enumerate()
                .filter(|&(k, _)| margin_violated(h.view(), k, gamma))
                .map(|(_, &pk)| pk)
                .sum::<f64>()
        })
        .sum();
    Ok(total / logits.nrows() as f64)
}

pub fn expected_margin_loss_exact(
    model: &MlpClassifier,
    rows: ArrayView2<f64>,
    eta: ArrayView2<f64>,
    gamma: f64,
) -> Result<f64> {
    expected_margin_loss_from_logits(model.forward(rows)?.view(), eta, gamma)
}

pub(crate) fn check_distribution_rows(eta: ArrayView2<f64>) -> Result<()> {
    for (i, row) in eta.axis_iter(Axis(0)).enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(format!(
                "label distribution row {i} is not a distribution (sum {s})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_linear_layer() {
        let m = MlpClassifier::new(vec![array![[2.0, 0.0], [0.0, 2.0]]]).unwrap();
        let out = m.forward(array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(out, array![[2.0, 0.0]]);
    }

    #[test]
    fn zero_input_gives_zero_logits() {
        let m = MlpClassifier::new(vec![
            array![[1.0, -2.0], [0.5, 0.3], [-1.0, 1.0]],
            array![[1.0, 2.0, 3.0], [-1.0, 0.0, 1.0]],
        ])
        .unwrap();
        let out = m.forward(array![[0.0, 0.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(m.forward(array![[0.0, 0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn layer_chain_must_match() {
        let bad = MlpClassifier::new(vec![Array2::zeros((3, 2)), Array2::zeros((2, 4))]);
        assert!(matches!(bad, Err(Error::Dimension(_))));
    }

    #[test]
    fn argmax_ties_and_shift() {
        assert_eq!(argmax(array![2.0, 0.5, 0.1].view()), 0);
        assert_eq!(argmax(array![1.0, 1.0].view()), 0);
        let row = array![0.3, 1.7, -0.2];
        assert_eq!(argmax(row.view()), argmax((&row + 100.0).view()));
    }

    #[test]
    fn margin_loss_examples() {
        let logits = array![[2.0, 0.5, 0.1]];
        assert_eq!(margin_loss_from_logits(logits.view(), &[0], 1.0).unwrap(), 0.0);
        assert_eq!(margin_loss_from_logits(logits.view(), &[0], 2.0).unwrap(), 1.0);
        let wrong = array![[0.0, 1.0], [3.0, -1.0]];
        assert_eq!(margin_loss_from_logits(wrong.view(), &[0, 1], 0.0).unwrap(), 1.0);
        assert!(margin_loss_from_logits(logits.view(), &[0], -0.5).is_err());
        assert!(margin_loss_from_logits(Array2::zeros((0, 2)).view(), &[], 0.0).is_err());
    }

    #[test]
    fn expected_loss_degenerate_and_saturated() {
        let logits = array![[2.0, 0.5], [0.1, 0.4], [1.0, 3.0]];
        let labels = [0, 0, 1];
        let onehot = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let e = expected_margin_loss_from_logits(logits.view(), onehot.view(), 0.5).unwrap();
        let emp = margin_loss_from_logits(logits.view(), &labels, 0.5).unwrap();
        assert_eq!(e, emp);
        let uniform = Array2::from_elem((3, 2), 0.5);
        let sat = expected_margin_loss_from_logits(logits.view(), uniform.view(), 100.0).unwrap();
        assert_eq!(sat, 1.0);
        let bad = array![[0.7, 0.7], [0.5, 0.5], [0.5, 0.5]];
        assert!(expected_margin_loss_from_logits(logits.view(), bad.view(), 0.0).is_err());
    }

    #[test]
    fn norms_of_diagonal_layer() {
        let m = MlpClassifier::new(vec![array![[3.0, 0.0], [0.0, 1.0]]]).unwrap();
        let n = m.weight_norms().unwrap();
        assert!((n.spectral[0] - 3.0).abs() < 1e-9);
        assert!((n.frobenius[0] - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(n.max_frobenius, n.frobenius[0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MlpClassifier::new(vec![array![[0.1, -0.2], [3.5, 1e-17]], array![[1.0, 2.0], [0.0, -1.0]]])
            .unwrap();
        let back = MlpClassifier::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
