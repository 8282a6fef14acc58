//! Pruned Baugh-Wooley array multipliers.
//!
//! A signed 8x8 array multiplier sums 64 partial-product cells plus two
//! constant correction bits. Removing cells yields a family of approximate
//! multipliers whose error is easy to reason about: dropping only cells with
//! both indices below 7 removes non-negative terms, so the result is the
//! exact product minus the dropped partial products.
//!
//! The named presets stand in for the EvoApprox8b circuits when their real
//! product tables are not available. They are ordered by error and keep the
//! published MAE figures where one exists (KVA, KVB, KTY).

use super::MultiplierModel;

/// Surrogate preset names, from most to least accurate.
pub const SURROGATE_NAMES: [&str; 11] = [
    "KV8", "KVA", "KVB", "KVL", "KX2", "KRC", "KR6", "L2H", "L1G", "KTY", "L2D",
];

/// An 8x8 Baugh-Wooley array with a set of partial-product cells removed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrunedArray {
    /// `dropped[i][j]` removes the cell for operand bits `a_i`, `b_j`.
    dropped: [[bool; 8]; 8],
}

impl PrunedArray {
    /// The full array; extensionally equal to the exact product.
    pub fn exact() -> Self {
        Self::default()
    }

    /// Removes every cell whose weight column `i + j` is below `column`.
    pub fn columns_below(column: usize) -> Self {
        let mut arr = Self::default();
        for i in 0..8 {
            for j in 0..8 {
                if i + j < column {
                    arr.dropped[i][j] = true;
                }
            }
        }
        arr
    }

    /// Additionally removes `count` non-negative cells from `column`, taken
    /// from the outside of the column inward.
    pub fn with_column_cells(mut self, column: usize, count: usize) -> Self {
        let mut cells: Vec<(usize, usize)> = (0..8)
            .filter_map(|i| column.checked_sub(i).map(|j| (i, j)))
            .filter(|&(i, j)| i < 7 && j < 7)
            .collect();
        // (1,6), (6,1), (2,5), (5,2), ...
        cells.sort_by_key(|&(i, j)| (i.min(j), i > j));
        for &(i, j) in cells.iter().take(count) {
            self.dropped[i][j] = true;
        }
        self
    }

    pub fn drop_cell(mut self, i: usize, j: usize) -> Self {
        self.dropped[i][j] = true;
        self
    }

    pub fn dropped_cells(&self) -> usize {
        self.dropped.iter().flatten().filter(|&&d| d).count()
    }

    /// Fraction of the 64 partial-product cells that remain.
    pub fn retained_fraction(&self) -> f64 {
        (64 - self.dropped_cells()) as f64 / 64.0
    }

    pub fn product(&self, a: i8, b: i8) -> i16 {
        let (a, b) = (a as u8, b as u8);
        // Constant correction bits of the Baugh-Wooley scheme.
        let mut sum: u32 = (1 << 8) + (1 << 15);
        for i in 0..8 {
            let ai = (a >> i) & 1;
            for j in 0..8 {
                if self.dropped[i][j] {
                    continue;
                }
                let bj = (b >> j) & 1;
                let mut bit = ai & bj;
                // Cells pairing exactly one sign bit carry negative weight and
                // are complemented.
                if (i == 7) != (j == 7) {
                    bit ^= 1;
                }
                sum += (bit as u32) << (i + j);
            }
        }
        sum as u16 as i16
    }

    /// Tabulates the array into a LUT model named `name`.
    pub fn to_model(&self, name: impl Into<String>) -> MultiplierModel {
        MultiplierModel::from_fn(name, |a, b| self.product(a, b))
    }

    /// The pruning used for a named surrogate preset.
    pub fn preset(name: &str) -> Option<Self> {
        let arr = match name {
            "KV8" => Self::exact(),
            "KVA" => Self::columns_below(2),
            "KVB" => Self::columns_below(3),
            "KVL" => Self::columns_below(3).with_column_cells(3, 2),
            "KX2" => Self::columns_below(4),
            "KRC" => Self::columns_below(5),
            "KR6" => Self::columns_below(5).with_column_cells(5, 2),
            "L2H" => Self::columns_below(6),
            "L1G" => Self::columns_below(7),
            "KTY" => Self::columns_below(7).with_column_cells(7, 1),
            "L2D" => Self::columns_below(7).with_column_cells(7, 3),
            _ => return None,
        };
        Some(arr)
    }
}
