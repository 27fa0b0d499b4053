//! Decentralized Massive MIMO uplink detection on a daisy chain of antenna
//! clusters.
//!
//! The crate is organized along the processing path:
//!
//! - [`signal_model`]: Rayleigh channels, Gray-mapped QAM, and the noisy
//!   uplink `y = Hs + v`.
//! - [`detectors`]: zero-forcing plus the recursive RLS, SGD and averaged SGD
//!   detectors, each expressed as a per-antenna update.
//! - [`chain_sim`]: a discrete-event simulator of the cluster chain with
//!   pipelining, power save and chain extension.
//! - [`interconnect`]: closed-form inter-node data rates for the daisy chain
//!   and for star and centralized baselines.
//! - [`harness`]: Monte Carlo experiment driver, config files and CSV output.

pub mod chain_sim;
pub mod detectors;
mod error;
pub mod harness;
pub mod interconnect;
pub mod linalg;
pub mod rng;
pub mod signal_model;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
