//! Timestamp boson sampling toolkit.
//!
//! The crate covers the full software twin of a timestamped boson sampling
//! experiment:
//!
//! - [`matrix`]: Haar-random interferometers and transfer matrices assembled
//!   from amplitude/phase characterization tables.
//! - [`permanent`]: Gray-code Ryser permanents plus a brute-force oracle, and
//!   the indistinguishable / distinguishable outcome probabilities built on them.
//! - [`combination`] and [`distribution`]: collision-free output combinations
//!   in colexicographic order and normalized output distributions.
//! - [`simulator`]: marked Poisson event logs with picosecond timestamps.
//! - [`tofs`]: per-channel time-tag streams, delay calibration and n-fold
//!   coincidence extraction.
//! - [`reconstruction`]: counting and first-arrival timestamp estimators with
//!   the occurrence-band filter.
//! - [`validation`]: row-norm and likelihood-ratio discriminator traces.
//! - [`advantage`]: sampling-rate and computational-step arithmetic.
//!
//! Randomness always enters through explicit `u64` seeds; identical inputs
//! give bit-identical outputs.

pub mod advantage;
pub mod combination;
pub mod distribution;
pub mod error;
pub mod matrix;
pub mod permanent;
pub mod reconstruction;
pub mod simulator;
pub mod stats;
pub mod tofs;
pub mod validation;

pub use combination::OutputCombination;
pub use distribution::{Distribution, Provenance};
pub use error::{Error, Result};
pub use matrix::{MatrixKind, TransferMatrix};
pub use simulator::{EventLog, Timestamp};

pub use num_complex::Complex64;
