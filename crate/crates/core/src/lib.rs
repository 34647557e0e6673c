//! Joint spectral radius bounds for finite matrix sets, and their use in
//! certifying bounded transmit powers under distributed power control with
//! time-varying link gains.
//!
//! * [`matrix`]: dense arithmetic, norms, certified spectral radius.
//! * [`jsr`]: brute-force and branch-and-bound JSR brackets, stability
//!   certificates, instability witnesses.
//! * [`power`]: gain matrices, SINR, DPC/DBA update steps, update sets.
//! * [`switching`]: trajectory rollouts, decay fitting, verdicts.

pub mod jsr;
pub mod matrix;
pub mod power;
pub mod rng;
pub mod switching;

pub use jsr::{JsrEstimate, ProductWord, StabilityCertificate, UpdateSet};
pub use matrix::{Matrix, MatrixError, NormKind};
pub use power::{CSchedule, GainMatrix, PowerVector, Scheme, Sinr, SinrVector};
pub use switching::{BoundednessVerdict, SwitchingPolicy, Trajectory, VerdictKind};
