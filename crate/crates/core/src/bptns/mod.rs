//! Belief-propagation-gauged tensor-network states: BP fixed points, simple
//! update with bond truncation, and loop-corrected measurement.

mod bp;
mod evolve;
mod gates;
mod measure;
mod state;
mod tensor;

pub use bp::{bp_fixed_point, bp_refresh, loop_corrected_norm, BPCache, ContractionEstimate, MeasurementConfig};
pub use evolve::{evolve_bptns, evolve_bptns_logged, trotter_layers, DiagnosticsLog, Evolution, LayerRecord};
pub use gates::{apply_gate, apply_gate_with_cutoff, Gate, GateReport, DEFAULT_SVD_CUTOFF};
pub use measure::{measure_all_correlations, measure_all_correlations_with, measure_correlation};
pub use state::{init_tns, TNState, TnsSnapshot, SNAPSHOT_FORMAT};
pub use tensor::{Tensor, TensorRecord};
