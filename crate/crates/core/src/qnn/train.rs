use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, softmax_in_place, Activation, ArchSpec};
use crate::error::{Error, Result};

/// Float network: `weights[l]` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    pub spec: ArchSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl FloatModel {
    /// Glorot-uniform weights and zero biases.
    pub fn init(spec: ArchSpec, rng: &mut impl Rng) -> Self {
        let (weights, biases) = spec
            .layer_dims()
            .map(|(k, n)| {
                let limit = (6.0 / (k + n) as f64).sqrt();
                let w = Array2::from_shape_simple_fn((k, n), || rng.gen_range(-limit..limit));
                (w, Array1::zeros(n))
            })
            .unzip();
        FloatModel { spec, weights, biases }
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let ok = self.weights.len() == self.spec.num_layers()
            && self.biases.len() == self.spec.num_layers()
            && self
                .spec
                .layer_dims()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|((k, n), (w, b))| w.dim() == (k, n) && b.len() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::Consistency(format!(
                "parameter shapes do not match {}",
                self.spec
            )))
        }
    }

    /// Activations of every layer: `out[0]` is the input, `out[L]` the
    /// softmax probabilities.
    pub fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.spec.num_layers() - 1;
        let mut acts = vec![x.to_owned()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l == last {
                z.rows_mut().into_iter().for_each(softmax_in_place);
            } else {
                let act = self.spec.hidden();
                z.mapv_inplace(|v| act.apply(v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let probs = self.forward_all(x).pop().unwrap();
        probs.rows().into_iter().map(argmax).collect()
    }

    /// Percent of `labels` predicted correctly.
    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[u8]) -> f64 {
        let correct = self
            .predict(x)
            .iter()
            .zip(labels)
            .filter(|(p, &l)| **p == l as usize)
            .count();
        100.0 * correct as f64 / labels.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Mean cross-entropy over the batch and its gradients.
pub fn loss_and_gradients(model: &FloatModel, x: ArrayView2<f64>, labels: &[u8]) -> (f64, Gradients) {
    let acts = model.forward_all(x);
    let batch = x.nrows() as f64;
    let probs = acts.last().unwrap();

    let mut loss = 0.0;
    let mut delta = probs.clone();
    for (mut row, &label) in delta.rows_mut().into_iter().zip(labels) {
        loss -= row[label as usize].max(f64::MIN_POSITIVE).ln();
        row[label as usize] -= 1.0;
    }
    delta /= batch;

    let n = model.spec.num_layers();
    let mut gw = Vec::with_capacity(n);
    let mut gb = Vec::with_capacity(n);
    for l in (0..n).rev() {
        gw.push(acts[l].t().dot(&delta));
        gb.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut prev = delta.dot(&model.weights[l].t());
            let h = &acts[l];
            match model.spec.hidden() {
                Activation::Tanh => prev.zip_mut_with(h, |d, &a| *d *= 1.0 - a * a),
                Activation::Sigmoid => prev.zip_mut_with(h, |d, &a| *d *= a * (1.0 - a)),
                Activation::Softmax => unreachable!("hidden layers are never softmax"),
            }
            delta = prev;
        }
    }
    gw.reverse();
    gb.reverse();
    (
        loss / batch,
        Gradients {
            weights: gw,
            biases: gb,
        },
    )
}

/// Mini-batch SGD with momentum on softmax cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Trailing samples kept out of training and used for the accuracy
    /// floor check. With 0 the floor is checked on the training data.
    pub holdout: usize,
    /// Minimum accuracy (percent) the trained model must reach.
    pub accuracy_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            holdout: 5000,
            accuracy_floor: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

pub fn train(spec: ArchSpec, x: ArrayView2<f64>, labels: &[u8], cfg: &TrainConfig, seed: u64) -> Result<FloatModel> {
    train_with_progress(spec, x, labels, cfg, seed, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch. Deterministic for a
/// given seed.
pub fn train_with_progress(
    spec: ArchSpec,
    x: ArrayView2<f64>,
    labels: &[u8],
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(EpochStats),
) -> Result<FloatModel> {
    if x.nrows() == 0 || x.nrows() != labels.len() {
        return Err(Error::Argument(format!(
            "{} samples with {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if x.ncols() != spec.inputs() {
        return Err(Error::Argument(format!(
            "samples have {} features but the network expects {}",
            x.ncols(),
            spec.inputs()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= spec.classes()) {
        return Err(Error::Argument(format!(
            "label {l} outside the {} output classes",
            spec.classes()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    if cfg.holdout >= x.nrows() {
        return Err(Error::Argument(format!(
            "holdout of {} leaves no training samples out of {}",
            cfg.holdout,
            x.nrows()
        )));
    }

    let n_train = x.nrows() - cfg.holdout;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = FloatModel::init(spec, &mut rng);
    let mut vel_w: Vec<Array2<f64>> = model.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
    let mut vel_b: Vec<Array1<f64>> = model.biases.iter().map(|b| Array1::zeros(b.len())).collect();
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = loss_and_gradients(&model, xb.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss diverged to {loss} in epoch {epoch}")));
            }
            loss_sum += loss;
            batches += 1;
            for l in 0..model.weights.len() {
                vel_w[l].zip_mut_with(&grads.weights[l], |v, &g| {
                    *v = cfg.momentum * *v - cfg.learning_rate * g
                });
                vel_b[l].zip_mut_with(&grads.biases[l], |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                model.weights[l] += &vel_w[l];
                model.biases[l] += &vel_b[l];
            }
            let finite = model.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
                && model.biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::Training(format!("parameters diverged in epoch {epoch}")));
            }
        }
        on_epoch(EpochStats {
            epoch,
            mean_loss: loss_sum / batches as f64,
        });
    }

    let (check_x, check_y) = if cfg.holdout > 0 {
        (x.slice(ndarray::s![n_train.., ..]), &labels[n_train..])
    } else {
        (x.view(), labels)
    };
    let acc = model.accuracy(check_x, check_y);
    if acc < cfg.accuracy_floor {
        return Err(Error::Training(format!(
            "accuracy {acc:.2}% is below the {:.2}% floor",
            cfg.accuracy_floor
        )));
    }
    Ok(model)
}
