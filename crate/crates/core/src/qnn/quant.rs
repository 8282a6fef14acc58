use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::{argmax, ArchSpec, FloatModel};
use crate::arith::MultiplierModel;
use crate::data::INPUT_SCALE;
use crate::error::{Error, Result};
use crate::fault::FaultSite;
use crate::systolic::{SystolicArray, SystolicConfig};

/// Symmetric int8 quantization: `round_half_even(x / scale)` clamped to
/// [-127, 127].
#[inline]
pub(crate) fn quantize_value(x: f64, scale: f64) -> i8 {
    (x / scale).round_ties_even().clamp(-127.0, 127.0) as i8
}

fn scale_for(max_abs: f64, what: &str) -> Result<f64> {
    if max_abs > 0.0 && max_abs.is_finite() {
        Ok(max_abs / 127.0)
    } else {
        Err(Error::DegenerateScale(format!("{what} has max |x| = {max_abs}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    /// `fan_in x fan_out`, values in [-127, 127].
    pub weights: Array2<i8>,
    pub weight_scale: f64,
    /// Scale of this layer's int8 input activations.
    pub input_scale: f64,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantModel {
    pub spec: ArchSpec,
    pub layers: Vec<QuantLayer>,
}

/// Quantizes with the fixed pixel input scale.
pub fn quantize(model: &FloatModel, calib: ArrayView2<f64>) -> Result<QuantModel> {
    quantize_with_input_scale(model, calib, Some(INPUT_SCALE))
}

/// Per-tensor symmetric quantization. Weight scales are `max|W| / 127`;
/// activation scales come from the largest absolute activation entering each
/// layer over `calib`. With `input_scale = None` the first layer's scale is
/// calibrated too.
pub fn quantize_with_input_scale(
    model: &FloatModel,
    calib: ArrayView2<f64>,
    input_scale: Option<f64>,
) -> Result<QuantModel> {
    model.check_shapes()?;
    if calib.nrows() == 0 {
        return Err(Error::Argument("empty calibration set".into()));
    }
    if calib.ncols() != model.spec.inputs() {
        return Err(Error::Argument(format!(
            "calibration samples have {} features, network expects {}",
            calib.ncols(),
            model.spec.inputs()
        )));
    }
    let acts = model.forward_all(calib);
    let max_abs = |a: &Array2<f64>| a.fold(0.0f64, |m, &x| m.max(x.abs()));

    let mut layers = Vec::with_capacity(model.spec.num_layers());
    for (l, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        let weight_scale = scale_for(max_abs(w), &format!("layer {} weights", l + 1))?;
        let input_scale = match (l, input_scale) {
            (0, Some(s)) => s,
            _ => scale_for(max_abs(&acts[l]), &format!("layer {} inputs", l + 1))?,
        };
        layers.push(QuantLayer {
            weights: w.mapv(|x| quantize_value(x, weight_scale)),
            weight_scale,
            input_scale,
            bias: b.clone(),
        });
    }
    Ok(QuantModel {
        spec: model.spec.clone(),
        layers,
    })
}

impl QuantModel {
    pub(crate) fn check_shapes(&self) -> Result<()> {
        let ok = self.layers.len() == self.spec.num_layers()
            && self
                .spec
                .layer_dims()
                .zip(&self.layers)
                .all(|((k, n), l)| l.weights.dim() == (k, n) && l.bias.len() == n)
            && self.layers.iter().all(|l| l.weight_scale > 0.0 && l.input_scale > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Consistency(format!(
                "quantized parameters do not match {}",
                self.spec
            )))
        }
    }

    /// Real-valued pre-activations of `layer` (1-based) from its int8 inputs.
    fn pre_activation(&self, array: &SystolicArray, x: ArrayView2<i8>, layer: usize) -> Result<Array2<f64>> {
        let q = &self.layers[layer - 1];
        let acc = array.matmul(x, q.weights.view(), layer)?;
        let scale = q.weight_scale * q.input_scale;
        let mut real = acc.mapv(|v| v as f64 * scale);
        real += &q.bias;
        Ok(real)
    }

    /// Runs layers `from..=to` (1-based, hidden layers only) and returns the
    /// int8 activations entering layer `to + 1`.
    pub fn run_hidden(&self, array: &SystolicArray, x: ArrayView2<i8>, from: usize, to: usize) -> Result<Array2<i8>> {
        if from == 0 || to >= self.spec.num_layers() {
            return Err(Error::Argument(format!(
                "hidden layers {from}..={to} outside 1..{}",
                self.spec.num_layers()
            )));
        }
        let act = self.spec.hidden();
        let mut cur = x.to_owned();
        for layer in from..=to {
            let real = self.pre_activation(array, cur.view(), layer)?;
            let next_scale = self.layers[layer].input_scale;
            cur = real.mapv(|v| quantize_value(act.apply(v), next_scale));
        }
        Ok(cur)
    }

    /// Runs layers `from..=L` and returns the output logits (softmax is
    /// monotone, so predictions can be read straight off them).
    pub fn logits_from(&self, array: &SystolicArray, x: ArrayView2<i8>, from: usize) -> Result<Array2<f64>> {
        let last = self.spec.num_layers();
        let input = if from < last {
            self.run_hidden(array, x, from, last - 1)?
        } else {
            x.to_owned()
        };
        self.pre_activation(array, input.view(), last)
    }

    /// Predicted class per row of int8 activations entering layer `from`.
    pub fn predict_from(&self, array: &SystolicArray, x: ArrayView2<i8>, from: usize) -> Result<Vec<u8>> {
        const CHUNK: usize = 128;
        let chunks: Vec<_> = x.axis_chunks_iter(Axis(0), CHUNK).collect();
        let chunks: Vec<Vec<u8>> = chunks
            .into_par_iter()
            .map(|chunk| {
                let logits = self.logits_from(array, chunk, from)?;
                Ok(logits.rows().into_iter().map(|r| argmax(r) as u8).collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.concat())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub predictions: Vec<u8>,
    pub correct: usize,
    /// Percent correct.
    pub accuracy: f64,
}

impl Inference {
    pub fn score(predictions: Vec<u8>, labels: &[u8]) -> Self {
        let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
        let accuracy = 100.0 * correct as f64 / labels.len().max(1) as f64;
        Inference {
            predictions,
            correct,
            accuracy,
        }
    }
}

/// Classifies int8 images on a default 8x8 array built from `model` and
/// `fault`.
pub fn infer(
    qm: &QuantModel,
    images: ArrayView2<i8>,
    labels: &[u8],
    model: &MultiplierModel,
    fault: Option<&FaultSite>,
) -> Result<Inference> {
    let array = SystolicArray::new(SystolicConfig::default(), model, fault.copied())?;
    infer_on(qm, &array, images, labels)
}

pub fn infer_on(qm: &QuantModel, array: &SystolicArray, images: ArrayView2<i8>, labels: &[u8]) -> Result<Inference> {
    qm.check_shapes()?;
    if let Some(f) = array.fault() {
        let cfg = array.config();
        f.validate(qm.spec.num_layers(), cfg.rows, cfg.cols)?;
    }
    if images.nrows() != labels.len() {
        return Err(Error::Argument(format!(
            "{} images with {} labels",
            images.nrows(),
            labels.len()
        )));
    }
    if images.ncols() != qm.spec.inputs() {
        return Err(Error::Argument(format!(
            "images have {} features, network expects {}",
            images.ncols(),
            qm.spec.inputs()
        )));
    }
    let predictions = qm.predict_from(array, images, 1)?;
    Ok(Inference::score(predictions, labels))
}
