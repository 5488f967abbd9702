//! Simulation and inference toolkit for a single Rydberg qubit hosted in a
//! small atomic ensemble: blockade geometry, three-photon preparation,
//! random-telegraph photon counting, threshold readout, and coherent
//! Rabi/Ramsey dynamics with measurement-error correction.
//!
//! # Units
//!
//! Every stored frequency is an *ordinary* frequency in MHz and every time is
//! in µs, so `f * t` is a number of cycles. Angular quantities appear only at
//! the point of use as `2π·f·t`.
//!
//! | quantity                 | unit              |
//! |--------------------------|-------------------|
//! | pair shift, Rabi freq.   | MHz               |
//! | C6 / C3                  | MHz·µm⁶ / MHz·µm³ |
//! | length                   | µm                |
//! | time                     | µs                |
//! | photon / switching rate  | µs⁻¹              |
//! | Ramsey detuning spread   | rad/µs            |
//! | density                  | cm⁻³              |
//!
//! Stochastic routines take explicit seeds; per-item streams come from
//! [`seed::seed_derive`], so results do not depend on thread count.

pub mod ensemble;
pub mod error;
pub mod estimate;
pub mod interactions;
pub mod prep;
pub mod qubit;
pub mod readout;
pub mod seed;
pub mod telegraph;

pub use error::{Error, Result};
