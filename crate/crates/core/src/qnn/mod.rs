//! Feed-forward classifiers: float training, int8 post-training
//! quantization, and quantized inference on a simulated systolic array.

mod io;
mod quant;
mod train;

use std::fmt;

use ndarray::{ArrayView1, ArrayViewMut1};

use crate::data::DatasetName;
use crate::error::{Error, Result};

pub use io::{load_float_model, load_quant_model, save_float_model, save_quant_model, MAGIC};
pub use quant::{infer, infer_on, quantize, quantize_with_input_scale, Inference, QuantLayer, QuantModel};
pub use train::{loss_and_gradients, train, train_with_progress, EpochStats, FloatModel, Gradients, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softmax,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Sigmoid => 1,
            Activation::Softmax => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }

    /// Element-wise hidden activation.
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softmax => panic!("softmax is not element-wise"),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        })
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: ArrayView1<f64>) -> ndarray::Array1<f64> {
    let mut out = logits.to_owned();
    softmax_in_place(out.view_mut());
    out
}

pub(crate) fn softmax_in_place(mut v: ArrayViewMut1<f64>) {
    let max = v.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    v.mapv_inplace(|x| (x - max).exp());
    let sum = v.sum();
    v.mapv_inplace(|x| x / sum);
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Layer widths and activations of a fully connected classifier. The output
/// layer always uses softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    layer_sizes: Vec<usize>,
    hidden: Activation,
}

impl ArchSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Argument(format!(
                "need at least an input and an output size, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Argument(format!("zero-width layer in {layer_sizes:?}")));
        }
        if hidden == Activation::Softmax {
            return Err(Error::Argument("softmax is only used on the output layer".into()));
        }
        Ok(ArchSpec { layer_sizes, hidden })
    }

    /// The reference configurations: 784-256-256-256-10 for MNIST and
    /// 784-512-512-512-10 for Fashion-MNIST; architecture 1 uses tanh hidden
    /// layers and architecture 2 sigmoid.
    pub fn reference(dataset: DatasetName, arch: u8) -> Result<Self> {
        let hidden = match arch {
            1 => Activation::Tanh,
            2 => Activation::Sigmoid,
            _ => return Err(Error::Argument(format!("architecture {arch} is not 1 or 2"))),
        };
        let width = match dataset {
            DatasetName::Mnist => 256,
            DatasetName::FashionMnist => 512,
        };
        Self::new(vec![784, width, width, width, 10], hidden)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden(&self) -> Activation {
        self.hidden
    }

    /// Number of weight layers.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `(fan_in, fan_out)` of each weight layer.
    pub fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Multiply-accumulates per classified image.
    pub fn macs_per_image(&self) -> u64 {
        self.layer_dims()
            .map(|(k, n)| crate::systolic::mac_count(1, k, n))
            .sum()
    }

    /// Architecture number (1 = tanh, 2 = sigmoid).
    pub fn arch_id(&self) -> u8 {
        match self.hidden {
            Activation::Sigmoid => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ArchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        write!(f, "{} ({})", sizes.join("-"), self.hidden)
    }
}

/// Percentage points lost going from `baseline` to `faulty` accuracy.
/// Negative when the fault happens to help.
pub fn accuracy_loss(baseline: f64, faulty: f64) -> f64 {
    baseline - faulty
}
