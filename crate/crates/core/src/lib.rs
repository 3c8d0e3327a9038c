//! Aquifer thermal energy storage (ATES) workbench.
//!
//! The crate covers the whole pipeline from simulated plant data to
//! closed-loop control:
//!
//! * [`plant`] simulates the hybrid warm/cold aquifer system with a heat
//!   exchanger between the ground loop and the building loop.
//! * [`datagen`] excites the plant and packages noisy train/validation sets.
//! * [`sysid`] identifies a MIMO ARX predictor with plain least squares or
//!   with the correlation-function least squares (COR-LS) method.
//! * [`predictor`] evaluates single- and multi-step prediction accuracy.
//! * [`qp`] is a dense ADMM solver for convex quadratic programs.
//! * [`mpc`] condenses the ARX predictor into an output-based OCP and runs it
//!   in receding horizon against the plant.

pub mod datagen;
pub mod error;
pub mod linalg;
pub mod mpc;
pub mod plant;
pub mod predictor;
pub mod qp;
pub mod sysid;

pub use error::{Error, Result};

/// Number of plant inputs, `u = (q, T_r)`.
pub const N_INPUTS: usize = 2;
/// Number of plant outputs, `y = (T_b, T_w(r0), T_c(r0))`.
pub const N_OUTPUTS: usize = 3;

/// Offset between degrees Celsius and Kelvin.
pub const CELSIUS_OFFSET: f64 = 273.15;

/// Seconds per hour, used for m³/h <-> m³/s conversions.
pub const SECONDS_PER_HOUR: f64 = 3600.0;
