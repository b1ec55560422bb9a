//! Full-batch Adam training with softmax cross-entropy and validation-accuracy
//! early stopping.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, MlpClassifier};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 penalty coefficient added to the gradient.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub hidden_width: usize,
    pub depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 400,
            patience: 100,
            seed: 0,
            hidden_width: 16,
            depth: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.depth == 0 || self.hidden_width == 0 {
            return Err(Error::invalid("epochs, patience, depth and hidden width must be positive"));
        }
        Ok(())
    }
}

/// Glorot-uniform initialization of a `depth`-layer network.
pub fn init_classifier(input_dim: usize, num_classes: usize, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<MlpClassifier> {
    let mut dims = vec![input_dim];
    dims.extend(std::iter::repeat_n(cfg.hidden_width, cfg.depth - 1));
    dims.push(num_classes);
    let layers = dims
        .windows(2)
        .map(|d| {
            let (fan_in, fan_out) = (d[0], d[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..limit))
        })
        .collect();
    MlpClassifier::new(layers)
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MlpClassifier) -> Self {
        let zeros: Vec<_> = model.layers().iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, model: &mut MlpClassifier, grads: &[Array2<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (l, w) in model.layers_mut().iter_mut().enumerate() {
            let m = &mut self.m[l];
            let v = &mut self.v[l];
            ndarray::Zip::from(w)
                .and(m)
                .and(v)
                .and(&grads[l])
                .for_each(|w, m, v, &g| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
        }
    }
}

/// Mean cross-entropy and its gradient with respect to every layer.
fn loss_and_grads(model: &MlpClassifier, x: ArrayView2<f64>, labels: &[usize]) -> (f64, Vec<Array2<f64>>) {
    let layers = model.layers();
    let last = layers.len() - 1;
    let mut acts = vec![x.to_owned()];
    let mut pre = Vec::with_capacity(layers.len());
    for (l, w) in layers.iter().enumerate() {
        let z = acts[l].dot(&w.t());
        let a = if l < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
        pre.push(z);
        acts.push(a);
    }
    let n = x.nrows() as f64;
    let logits = &acts[layers.len()];
    let mut delta = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let denom: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        let log_z = mx + denom.ln();
        loss += log_z - row[labels[i]];
        for (k, &v) in row.iter().enumerate() {
            delta[[i, k]] = ((v - log_z).exp() - f64::from(u8::from(k == labels[i]))) / n;
        }
    }
    let mut grads = vec![Array2::zeros((0, 0)); layers.len()];
    for l in (0..layers.len()).rev() {
        grads[l] = delta.t().dot(&acts[l]);
        if l > 0 {
            let mut back = delta.dot(&layers[l]);
            ndarray::Zip::from(&mut back).and(&pre[l - 1]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    (loss / n, grads)
}

fn accuracy(model: &MlpClassifier, x: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let logits = model.forward(x).expect("dimensions checked at entry");
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &y)| argmax(r.view()) == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Trains on `train_ids` and returns the weights from the epoch with the best
/// validation accuracy (earliest epoch on ties).
pub fn train(
    z: &Array2<f64>,
    labels: &[usize],
    num_classes: usize,
    train_ids: &[usize],
    val_ids: &[usize],
    cfg: &TrainConfig,
) -> Result<MlpClassifier> {
    cfg.validate()?;
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(Error::invalid("train and validation sets must be non-empty"));
    }
    let train_set: std::collections::HashSet<_> = train_ids.iter().collect();
    if val_ids.iter().any(|v| train_set.contains(v)) {
        return Err(Error::invalid("train and validation sets overlap"));
    }
    if labels.len() != z.nrows() {
        return Err(Error::Dimension("one label per feature row required".into()));
    }
    let x_train = z.select(Axis(0), train_ids);
    let y_train: Vec<usize> = train_ids.iter().map(|&i| labels[i]).collect();
    let x_val = z.select(Axis(0), val_ids);
    let y_val: Vec<usize> = val_ids.iter().map(|&i| labels[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_classifier(z.ncols(), num_classes, cfg, &mut rng)?;
    let mut adam = Adam::new(&model);
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        let (loss, mut grads) = loss_and_grads(&model, x_train.view(), &y_train);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
        }
        for (g, w) in grads.iter_mut().zip(model.layers()) {
            g.scaled_add(cfg.weight_decay, w);
        }
        adam.step(&mut model, &grads, cfg.learning_rate);
        let acc = accuracy(&model, x_val.view(), &y_val);
        if acc > best_acc {
            best_acc = acc;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if best.layers().iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged("non-finite weights".into()));
    }
    Ok(best)
}
