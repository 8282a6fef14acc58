//! Binary model files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "AXDN" | u16 version = 1 | u8 kind (0 float, 1 quantized)
//! u8 hidden activation (0 tanh, 1 sigmoid) | u8 output activation (2 softmax)
//! 3 reserved bytes | u32 n | n x u32 layer sizes
//! per layer, float:     f64 weights (fan_in x fan_out, row-major), f64 biases
//! per layer, quantized: f64 weight scale, f64 input scale,
//!                       i8 weights (row-major), f64 biases
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, ArchSpec, FloatModel, QuantLayer, QuantModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AXDN";
const VERSION: u16 = 1;
const KIND_FLOAT: u8 = 0;
const KIND_QUANT: u8 = 1;
/// Upper bound on any layer width, to reject garbage before allocating.
const MAX_WIDTH: usize = 1 << 20;

fn write_header(out: &mut Vec<u8>, spec: &ArchSpec, kind: u8) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(spec.hidden().code());
    out.push(Activation::Softmax.code());
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&(spec.layer_sizes().len() as u32).to_le_bytes());
    for &s in spec.layer_sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
}

fn put_f64s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn encode_float(model: &FloatModel) -> Result<Vec<u8>> {
    model.check_shapes()?;
    let mut out = Vec::new();
    write_header(&mut out, &model.spec, KIND_FLOAT);
    for (w, b) in model.weights.iter().zip(&model.biases) {
        put_f64s(&mut out, w.iter());
        put_f64s(&mut out, b.iter());
    }
    Ok(out)
}

pub(crate) fn encode_quant(model: &QuantModel) -> Result<Vec<u8>> {
    model.check_shapes()?;
    let mut out = Vec::new();
    write_header(&mut out, &model.spec, KIND_QUANT);
    for l in &model.layers {
        put_f64s(&mut out, [&l.weight_scale, &l.input_scale]);
        out.extend(l.weights.iter().map(|&w| w as u8));
        put_f64s(&mut out, l.bias.iter());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("layer too large".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn read_header(r: &mut Reader, expect_kind: u8) -> Result<ArchSpec> {
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let kind = r.u8()?;
    if kind != expect_kind {
        let name = |k| if k == KIND_FLOAT { "float" } else { "quantized" };
        return Err(Error::Format(format!(
            "expected a {} model, found kind {kind}",
            name(expect_kind)
        )));
    }
    let hidden = Activation::from_code(r.u8()?)
        .filter(|a| *a != Activation::Softmax)
        .ok_or_else(|| Error::Format("unknown hidden activation".into()))?;
    if r.u8()? != Activation::Softmax.code() {
        return Err(Error::Format("output activation must be softmax".into()));
    }
    r.take(3)?;
    let n = r.u32()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Format(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        let s = r.u32()? as usize;
        if s == 0 || s > MAX_WIDTH {
            return Err(Error::Format(format!("implausible layer width {s}")));
        }
        sizes.push(s);
    }
    ArchSpec::new(sizes, hidden).map_err(|e| Error::Format(e.to_string()))
}

fn finish(r: &Reader) -> Result<()> {
    if r.pos == r.bytes.len() {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "{} trailing bytes after model",
            r.bytes.len() - r.pos
        )))
    }
}

pub(crate) fn decode_float(bytes: &[u8]) -> Result<FloatModel> {
    let mut r = Reader { bytes, pos: 0 };
    let spec = read_header(&mut r, KIND_FLOAT)?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (k, n) in spec.layer_dims() {
        weights.push(Array2::from_shape_vec((k, n), r.f64s(k * n)?).unwrap());
        biases.push(Array1::from(r.f64s(n)?));
    }
    finish(&r)?;
    Ok(FloatModel { spec, weights, biases })
}

pub(crate) fn decode_quant(bytes: &[u8]) -> Result<QuantModel> {
    let mut r = Reader { bytes, pos: 0 };
    let spec = read_header(&mut r, KIND_QUANT)?;
    let mut layers = Vec::new();
    for (k, n) in spec.layer_dims() {
        let weight_scale = r.f64()?;
        let input_scale = r.f64()?;
        if !(weight_scale > 0.0 && input_scale > 0.0 && weight_scale.is_finite() && input_scale.is_finite()) {
            return Err(Error::Format("non-positive quantization scale".into()));
        }
        let raw = r.take(k * n)?;
        if raw.contains(&0x80) {
            return Err(Error::Format("weight value -128 outside the symmetric range".into()));
        }
        let weights = Array2::from_shape_vec((k, n), raw.iter().map(|&b| b as i8).collect()).unwrap();
        let bias = Array1::from(r.f64s(n)?);
        layers.push(QuantLayer {
            weights,
            weight_scale,
            input_scale,
            bias,
        });
    }
    finish(&r)?;
    Ok(QuantModel { spec, layers })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_float_model(model: &FloatModel, path: &Path) -> Result<()> {
    write_file(path, &encode_float(model)?)
}

pub fn save_quant_model(model: &QuantModel, path: &Path) -> Result<()> {
    write_file(path, &encode_quant(model)?)
}

pub fn load_float_model(path: &Path) -> Result<FloatModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_float(&bytes).map_err(|e| with_path(e, path))
}

pub fn load_quant_model(path: &Path) -> Result<QuantModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_quant(&bytes).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}
