//! Functional model of an int8 systolic array.
//!
//! The array is weight stationary: the weight element `W[k, n]` lives in
//! PE `(k mod rows, n mod cols)` of its tile, and a `K x N` weight matrix is
//! processed as a sequence of `rows x cols` tiles through the same physical
//! array. Only product-level behavior is modeled; timing and data skew are
//! not. Accumulation is exact in 32 bits.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::arith::{MultiplierModel, PAIRS};
use crate::error::{Error, Result};
use crate::fault::{FaultScope, FaultSite};

/// Largest reduction length whose 16-bit products cannot overflow an `i32`
/// accumulator.
pub const MAX_REDUCTION: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataflow {
    WeightStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystolicConfig {
    pub rows: usize,
    pub cols: usize,
    pub dataflow: Dataflow,
}

impl Default for SystolicConfig {
    fn default() -> Self {
        SystolicConfig {
            rows: 8,
            cols: 8,
            dataflow: Dataflow::WeightStationary,
        }
    }
}

impl SystolicConfig {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument(format!("empty {rows}x{cols} array")));
        }
        Ok(SystolicConfig {
            rows,
            cols,
            dataflow: Dataflow::WeightStationary,
        })
    }

    /// PE computing the product term with reduction index `k` and output
    /// column `n`.
    #[inline]
    pub fn pe_for(&self, k: usize, n: usize) -> (usize, usize) {
        (k % self.rows, n % self.cols)
    }
}

pub fn mac_count(m: usize, k: usize, n: usize) -> u64 {
    m as u64 * k as u64 * n as u64
}

/// Effective product table with per-row shortcuts.
struct ProductTable {
    products: Vec<i16>,
    /// `Some(c)` when every product with this left operand (as `u8`) is `c`.
    const_rows: [Option<i16>; 256],
}

impl ProductTable {
    fn new(products: Vec<i16>) -> Self {
        debug_assert_eq!(products.len(), PAIRS);
        let mut const_rows = [None; 256];
        for (a, slot) in const_rows.iter_mut().enumerate() {
            let row = &products[a << 8..(a + 1) << 8];
            if row.iter().all(|&p| p == row[0]) {
                *slot = Some(row[0]);
            }
        }
        ProductTable { products, const_rows }
    }

    #[inline]
    fn get(&self, a: u8, b: u8) -> i16 {
        self.products[((a as usize) << 8) | b as usize]
    }
}

/// A systolic array with a fixed multiplier model and optional fault,
/// reusable across layers and calls.
#[derive(Clone)]
pub struct SystolicArray {
    cfg: SystolicConfig,
    fault: Option<FaultSite>,
    base: Arc<ProductTable>,
    faulty: Option<Arc<ProductTable>>,
}

impl SystolicArray {
    pub fn new(cfg: SystolicConfig, model: &MultiplierModel, fault: Option<FaultSite>) -> Result<Self> {
        let products = model.to_table();
        let faulty = match &fault {
            Some(f) => {
                f.validate(usize::MAX, cfg.rows, cfg.cols)?;
                let mask = f.mask();
                Some(Arc::new(ProductTable::new(
                    products.iter().map(|&p| mask.apply(p)).collect(),
                )))
            }
            None => None,
        };
        Ok(SystolicArray {
            cfg,
            fault,
            base: Arc::new(ProductTable::new(products)),
            faulty,
        })
    }

    pub fn config(&self) -> &SystolicConfig {
        &self.cfg
    }

    pub fn fault(&self) -> Option<&FaultSite> {
        self.fault.as_ref()
    }

    /// `X (M x K) * W (K x N)` for network layer `layer` (1-based).
    pub fn matmul(&self, x: ArrayView2<i8>, w: ArrayView2<i8>, layer: usize) -> Result<Array2<i32>> {
        let (m, k) = x.dim();
        let (k2, n) = w.dim();
        if k != k2 {
            return Err(Error::Argument(format!("cannot multiply {m}x{k} by {k2}x{n}")));
        }
        if k == 0 || n == 0 {
            return Err(Error::Argument(format!("degenerate {k2}x{n} weight matrix")));
        }
        if k > MAX_REDUCTION {
            return Err(Error::Internal(format!(
                "reduction length {k} could overflow the 32-bit accumulator"
            )));
        }

        let active = self.fault.filter(|f| f.layer() == layer);
        let (table, pe_fault) = match (active, &self.faulty) {
            (Some(f), Some(faulty)) => match f.scope() {
                FaultScope::AllMultiplications => (faulty.as_ref(), None),
                FaultScope::SinglePe { row, col } => (self.base.as_ref(), Some((row, col, faulty.as_ref()))),
            },
            _ => (self.base.as_ref(), None),
        };

        let w_idx: Vec<u8> = w.iter().map(|&v| v as u8).collect();
        let x = x.as_standard_layout();
        let mut out = Array2::<i32>::zeros((m, n));

        for (x_row, mut out_row) in x.rows().into_iter().zip(out.rows_mut()) {
            let acc = out_row.as_slice_mut().expect("fresh array is contiguous");
            let mut row_bias: i32 = 0;
            for (kk, &a) in x_row.iter().enumerate() {
                let a = a as u8;
                if let Some(c) = table.const_rows[a as usize] {
                    row_bias += c as i32;
                    continue;
                }
                let products = &table.products[(a as usize) << 8..((a as usize) + 1) << 8];
                let weights = &w_idx[kk * n..(kk + 1) * n];
                for (slot, &b) in acc.iter_mut().zip(weights) {
                    *slot += products[b as usize] as i32;
                }
            }
            if row_bias != 0 {
                acc.iter_mut().for_each(|v| *v += row_bias);
            }

            // A single faulty PE only touches the terms it owns.
            if let Some((pe_row, pe_col, faulty)) = pe_fault {
                for kk in (pe_row..k).step_by(self.cfg.rows) {
                    let a = x_row[kk] as u8;
                    for nn in (pe_col..n).step_by(self.cfg.cols) {
                        let b = w_idx[kk * n + nn];
                        acc[nn] += faulty.get(a, b) as i32 - self.base.get(a, b) as i32;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One-shot matrix product on a systolic array. Builds the product tables on
/// every call; use [`SystolicArray`] to amortize that across calls.
pub fn tiled_matmul(
    x: ArrayView2<i8>,
    w: ArrayView2<i8>,
    model: &MultiplierModel,
    fault: Option<&FaultSite>,
    layer: usize,
    cfg: &SystolicConfig,
) -> Result<Array2<i32>> {
    SystolicArray::new(*cfg, model, fault.copied())?.matmul(x, w, layer)
}
