//! Fault-injection simulator for int8 neural networks running on approximate
//! systolic-array accelerators.
//!
//! The pipeline: train a float MLP ([`qnn::train`]), quantize it to int8
//! ([`qnn::quantize`]), run inference on a simulated systolic array with a
//! chosen multiplier model ([`arith`]) and an optional stuck-at fault
//! ([`fault`]), and relate the resulting accuracy to energy ([`energy`]).
//! [`sweep`] drives whole experiment grids.

pub mod arith;
pub mod data;
pub mod energy;
pub mod error;
pub mod fault;
pub mod qnn;
pub mod sweep;
pub mod systolic;

pub use arith::{characterize, load_lut, mul_exact, ErrorStats, MultiplierModel};
pub use data::{Dataset, DatasetName, SweepResult};
pub use energy::{estimate_energy, rank_tradeoff, EnergyTable};
pub use error::{Error, Result};
pub use fault::{apply_stuck_at, in_scope, is_masked, FaultScope, FaultSite, FaultType};
pub use qnn::{ArchSpec, FloatModel, QuantModel};
pub use sweep::{run_sweep, SweepGrid, SweepInputs};
pub use systolic::{mac_count, tiled_matmul, SystolicArray, SystolicConfig};
