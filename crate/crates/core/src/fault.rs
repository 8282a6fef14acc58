//! Permanent stuck-at faults on multiplier product bits.
//!
//! Bits are numbered from 1 (least significant) to 16 (the sign bit of the
//! 16-bit product) everywhere outside this module.
//!
//! Textual form, used by the CLI and result files:
//!
//! ```text
//! fault  := type "@bit" BIT "/layer" LAYER "/" scope
//! type   := "sa0" | "sa1"
//! scope  := "all" | "pe(" ROW "," COL ")"
//! ```
//!
//! e.g. `sa1@bit13/layer1/all` or `sa0@bit7/layer2/pe(3,4)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MIN_BIT: u8 = 1;
pub const MAX_BIT: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultType {
    StuckAt0,
    StuckAt1,
}

impl FaultType {
    pub fn code(self) -> &'static str {
        match self {
            FaultType::StuckAt0 => "sa0",
            FaultType::StuckAt1 => "sa1",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sa0" | "stuckat0" | "stuck-at-0" => Ok(FaultType::StuckAt0),
            "sa1" | "stuckat1" | "stuck-at-1" => Ok(FaultType::StuckAt1),
            _ => Err(Error::Argument(format!("unknown fault type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultScope {
    /// Every multiplication of the target layer sees the fault.
    AllMultiplications,
    /// Only products computed by one processing element.
    SinglePe { row: usize, col: usize },
}

impl fmt::Display for FaultScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultScope::AllMultiplications => f.write_str("all"),
            FaultScope::SinglePe { row, col } => write!(f, "pe({row},{col})"),
        }
    }
}

impl FromStr for FaultScope {
    type Err = Error;

    /// Accepts `all`, `pe(R,C)` and the CLI shorthand `pe:R,C`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("bad fault scope {s:?}"));
        if s == "all" {
            return Ok(FaultScope::AllMultiplications);
        }
        let coords = s
            .strip_prefix("pe(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("pe:"))
            .ok_or_else(bad)?;
        let (row, col) = coords.split_once(',').ok_or_else(bad)?;
        Ok(FaultScope::SinglePe {
            row: row.trim().parse().map_err(|_| bad())?,
            col: col.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// A single permanent stuck-at fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultSite {
    fault_type: FaultType,
    bit: u8,
    layer: usize,
    scope: FaultScope,
}

impl FaultSite {
    pub fn new(fault_type: FaultType, bit: u8, layer: usize, scope: FaultScope) -> Result<Self> {
        check_bit(bit)?;
        if layer == 0 {
            return Err(Error::Argument("fault layers are numbered from 1".into()));
        }
        Ok(FaultSite {
            fault_type,
            bit,
            layer,
            scope,
        })
    }

    /// Fault on every multiplication of `layer`.
    pub fn layer_wide(fault_type: FaultType, bit: u8, layer: usize) -> Result<Self> {
        Self::new(fault_type, bit, layer, FaultScope::AllMultiplications)
    }

    pub fn fault_type(&self) -> FaultType {
        self.fault_type
    }

    pub fn bit(&self) -> u8 {
        self.bit
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn scope(&self) -> FaultScope {
        self.scope
    }

    /// Checks the site against a network depth and array shape.
    pub fn validate(&self, num_layers: usize, rows: usize, cols: usize) -> Result<()> {
        if self.layer > num_layers {
            return Err(Error::Argument(format!(
                "fault layer {} beyond network depth {num_layers}",
                self.layer
            )));
        }
        if let FaultScope::SinglePe { row, col } = self.scope {
            if row >= rows || col >= cols {
                return Err(Error::Argument(format!(
                    "PE ({row},{col}) outside a {rows}x{cols} array"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn mask(&self) -> StuckMask {
        StuckMask::new(self.fault_type, self.bit)
    }
}

impl fmt::Display for FaultSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}@bit{}/layer{}/{}",
            self.fault_type, self.bit, self.layer, self.scope
        )
    }
}

impl FromStr for FaultSite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("bad fault spec {s:?}"));
        let (ty, rest) = s.split_once('@').ok_or_else(bad)?;
        let mut parts = rest.splitn(3, '/');
        let bit = parts
            .next()
            .and_then(|p| p.strip_prefix("bit"))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        let layer = parts
            .next()
            .and_then(|p| p.strip_prefix("layer"))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        let scope = parts.next().ok_or_else(bad)?.parse()?;
        FaultSite::new(ty.parse()?, bit, layer, scope)
    }
}

fn check_bit(bit: u8) -> Result<()> {
    if (MIN_BIT..=MAX_BIT).contains(&bit) {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "fault bit {bit} out of range {MIN_BIT}..={MAX_BIT}"
        )))
    }
}

/// Precomputed AND/OR masks realizing a stuck bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StuckMask {
    and: u16,
    or: u16,
}

impl StuckMask {
    fn new(fault_type: FaultType, bit: u8) -> Self {
        let m = 1u16 << (bit - 1);
        match fault_type {
            FaultType::StuckAt0 => StuckMask { and: !m, or: 0 },
            FaultType::StuckAt1 => StuckMask { and: !0, or: m },
        }
    }

    #[inline]
    pub(crate) fn apply(self, value: i16) -> i16 {
        ((value as u16 & self.and) | self.or) as i16
    }
}

/// Forces product bit `bit` (1 = LSB) to the stuck value.
pub fn apply_stuck_at(value: i16, fault_type: FaultType, bit: u8) -> Result<i16> {
    check_bit(bit)?;
    Ok(StuckMask::new(fault_type, bit).apply(value))
}

/// True when the stuck bit already holds the forced value, so the fault has
/// no visible effect on this product.
pub fn is_masked(value: i16, fault_type: FaultType, bit: u8) -> Result<bool> {
    Ok(apply_stuck_at(value, fault_type, bit)? == value)
}

/// Whether a product computed in `layer` by PE `(pe_row, pe_col)` is hit by
/// `fault`.
pub fn in_scope(fault: &FaultSite, layer: usize, pe_row: usize, pe_col: usize) -> bool {
    fault.layer == layer
        && match fault.scope {
            FaultScope::AllMultiplications => true,
            FaultScope::SinglePe { row, col } => row == pe_row && col == pe_col,
        }
}
