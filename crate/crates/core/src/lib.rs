//! Certification and extraction of randomness from CHSH Bell-test event
//! data.
//!
//! Two pipelines run side by side over the same event log:
//!
//! * **Device-independent (DI)** — bounds min-entropy from the CHSH
//!   statistic S; yields nothing unless S > 2.
//! * **Semi-device-independent (SDI)** — bounds min-entropy from the
//!   remote-state-preparation dimension witness W_rsp under a qubit
//!   assumption; certifies randomness even without a Bell violation.
//!
//! Supporting pieces: an exact two-qubit simulator (analytic oracles and
//! synthetic event logs), confidence-corrected finite-statistics bounds,
//! and a Toeplitz leftover-hash extractor. The `rspcert` binary wires
//! these into `simulate`, `analyze`, and `extract` commands.

pub mod chsh;
pub mod error;
pub mod events;
pub mod extractor;
pub mod finite_stats;
pub mod report;
pub mod simulator;
pub mod witness;

pub use error::{Error, Result};
