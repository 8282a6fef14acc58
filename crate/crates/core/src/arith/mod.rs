//! Behavioral models of signed 8x8 -> 16-bit multipliers.
//!
//! A [`MultiplierModel`] is a total function over all 65,536 operand pairs.
//! Circuit-accurate approximate multipliers are represented as lookup tables
//! loaded from disk (see [`load_lut`] for the file layout), so any circuit
//! dump can be dropped in without code changes.

mod surrogate;

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use surrogate::{PrunedArray, SURROGATE_NAMES};

/// Number of operand pairs of an 8x8 multiplier.
pub const PAIRS: usize = 1 << 16;

/// Size in bytes of a LUT file: one little-endian `i16` per operand pair.
pub const LUT_FILE_LEN: usize = PAIRS * 2;

/// Exact two's-complement product. Always fits: the range is [-16256, 16384].
#[inline]
pub fn mul_exact(a: i8, b: i8) -> i16 {
    a as i16 * b as i16
}

/// Dense table index of an operand pair: `(u8(a) << 8) | u8(b)`.
#[inline]
pub fn lut_index(a: i8, b: i8) -> usize {
    ((a as u8 as usize) << 8) | b as u8 as usize
}

/// Inverse of [`lut_index`].
#[inline]
pub fn lut_operands(index: usize) -> (i8, i8) {
    ((index >> 8) as u8 as i8, index as u8 as i8)
}

#[derive(Clone)]
pub enum MultiplierModel {
    Accurate,
    Lut(LutMultiplier),
    /// Exact product with the `k` least significant product bits forced to 0.
    Truncated(u8),
}

/// A multiplier whose behavior is given by a full product table.
#[derive(Clone)]
pub struct LutMultiplier {
    name: String,
    table: Arc<[i16]>,
}

impl LutMultiplier {
    pub fn new(name: impl Into<String>, table: Vec<i16>) -> Result<Self> {
        if table.len() != PAIRS {
            return Err(Error::Format(format!(
                "product table has {} entries, expected {PAIRS}",
                table.len()
            )));
        }
        Ok(LutMultiplier {
            name: name.into(),
            table: table.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn table(&self) -> &[i16] {
        &self.table
    }
}

impl MultiplierModel {
    pub fn truncated(k: u8) -> Result<Self> {
        if k > 15 {
            return Err(Error::Argument(format!("truncation width {k} out of range 0..=15")));
        }
        Ok(MultiplierModel::Truncated(k))
    }

    /// Tabulates `f` over every operand pair into a LUT model.
    pub fn from_fn(name: impl Into<String>, f: impl Fn(i8, i8) -> i16) -> Self {
        let table: Vec<i16> = (0..PAIRS)
            .map(|i| {
                let (a, b) = lut_operands(i);
                f(a, b)
            })
            .collect();
        MultiplierModel::Lut(LutMultiplier {
            name: name.into(),
            table: Arc::from(table),
        })
    }

    pub fn name(&self) -> String {
        match self {
            MultiplierModel::Accurate => "accurate".to_owned(),
            MultiplierModel::Lut(lut) => lut.name.clone(),
            MultiplierModel::Truncated(k) => format!("trunc{k}"),
        }
    }

    #[inline]
    pub fn mul(&self, a: i8, b: i8) -> i16 {
        match self {
            MultiplierModel::Accurate => mul_exact(a, b),
            MultiplierModel::Lut(lut) => lut.table[lut_index(a, b)],
            MultiplierModel::Truncated(k) => {
                let mask = u16::MAX.checked_shl(*k as u32).unwrap_or(0);
                (mul_exact(a, b) as u16 & mask) as i16
            }
        }
    }

    /// The full product table in [`lut_index`] order.
    pub fn to_table(&self) -> Vec<i16> {
        match self {
            MultiplierModel::Lut(lut) => lut.table.to_vec(),
            _ => (0..PAIRS)
                .map(|i| {
                    let (a, b) = lut_operands(i);
                    self.mul(a, b)
                })
                .collect(),
        }
    }

    /// Whether every product equals a zero-operand's exact product, i.e. the
    /// model maps `(0, b)` and `(a, 0)` to zero.
    pub fn annihilates_zero(&self) -> bool {
        (i8::MIN..=i8::MAX).all(|x| self.mul(0, x) == 0 && self.mul(x, 0) == 0)
    }
}

impl fmt::Debug for MultiplierModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiplierModel::Accurate => f.write_str("Accurate"),
            MultiplierModel::Lut(lut) => write!(f, "Lut({:?})", lut.name),
            MultiplierModel::Truncated(k) => write!(f, "Truncated({k})"),
        }
    }
}

/// Exhaustive error statistics of a multiplier against [`mul_exact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    /// Mean absolute error as a percentage of the 2^16 output range.
    pub mae_percent: f64,
    pub max_abs_error: u32,
    /// Fraction of operand pairs whose product is wrong.
    pub error_rate: f64,
}

pub fn characterize(model: &MultiplierModel) -> ErrorStats {
    let mut abs_sum: u64 = 0;
    let mut max_abs: u32 = 0;
    let mut wrong: u64 = 0;
    for i in 0..PAIRS {
        let (a, b) = lut_operands(i);
        let err = (model.mul(a, b) as i32 - mul_exact(a, b) as i32).unsigned_abs();
        abs_sum += err as u64;
        max_abs = max_abs.max(err);
        wrong += (err != 0) as u64;
    }
    ErrorStats {
        mae_percent: 100.0 * abs_sum as f64 / (PAIRS as f64 * 65536.0),
        max_abs_error: max_abs,
        error_rate: wrong as f64 / PAIRS as f64,
    }
}

/// Reads a 131,072-byte product table. The entry for `(a, b)` is the
/// little-endian `i16` at byte offset `2 * lut_index(a, b)`. The model is
/// named after the file stem.
pub fn load_lut(path: impl AsRef<Path>) -> Result<MultiplierModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != LUT_FILE_LEN {
        return Err(Error::Format(format!(
            "{}: LUT file is {} bytes, expected {LUT_FILE_LEN}",
            path.display(),
            bytes.len()
        )));
    }
    let table = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(MultiplierModel::Lut(LutMultiplier::new(name, table)?))
}

pub fn save_lut(model: &MultiplierModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = model.to_table().into_iter().flat_map(i16::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Resolves a multiplier by name. `accurate` and `trunc<k>` are built in.
/// With a LUT directory, anything else is read from `<lut_dir>/<name>.lut`;
/// without one, the pruned-array surrogates ([`SURROGATE_NAMES`]) are built
/// on the fly.
pub fn resolve_multiplier(name: &str, lut_dir: Option<&Path>) -> Result<MultiplierModel> {
    if name.eq_ignore_ascii_case("accurate") || name.eq_ignore_ascii_case("exact") {
        return Ok(MultiplierModel::Accurate);
    }
    if let Some(k) = name.strip_prefix("trunc") {
        let k: u8 = k
            .parse()
            .map_err(|_| Error::Argument(format!("bad truncation multiplier name {name:?}")))?;
        return MultiplierModel::truncated(k);
    }
    let Some(dir) = lut_dir else {
        return PrunedArray::preset(name).map(|arr| arr.to_model(name)).ok_or_else(|| {
            Error::Config(format!(
                "unknown multiplier {name:?}: not built in and no LUT directory given"
            ))
        });
    };
    let path = dir.join(format!("{name}.lut"));
    if !path.exists() {
        return Err(Error::Config(format!(
            "no LUT for multiplier {name:?} at {}",
            path.display()
        )));
    }
    load_lut(path)
}
