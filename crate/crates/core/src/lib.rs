//! Kinetics of TG → DG → MG lipolysis with DG transacylation.
//!
//! * [`kinetics`]: rate laws, the full nondimensional system, conservation
//!   laws and the exponential decay envelope.
//! * [`integrator`]: adaptive Rosenbrock and Dormand–Prince integration with
//!   dense output and event location.
//! * [`qssa`]: the QSSA level `q̃(s)`, timescale diagnostics and reduced
//!   models for large `L`, `V` or `kappa`.

pub mod error;
pub mod integrator;
pub mod kinetics;
pub mod qssa;
pub mod sensitivity;
pub mod sweep;

pub use error::{Error, Result};
