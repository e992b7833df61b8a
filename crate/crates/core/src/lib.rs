//! Simulation and cross-validation toolkit for quenches of disordered
//! transverse-field Ising models.
//!
//! Two engines evolve the same second-order Trotter circuit:
//!
//! * [`exact`]: a dense statevector, used as the ground truth at desk scale;
//! * [`bptns`]: a tensor-network state gauged and contracted with belief
//!   propagation, with optional loop corrections.
//!
//! [`metrics`] scores correlation matrices against each other, and
//! [`estimator`] recovers the error of one method against an unavailable
//! ground truth from its error against a second, independent noisy reference.
//! [`harness`] ties everything together into reproducible, content-addressed
//! experiment plans.

pub mod bptns;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod graphs;
pub mod harness;
pub(crate) mod linalg;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
