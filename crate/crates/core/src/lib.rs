//! Fisher-information error bounds for hybrid GNSS / 5G mmWave vehicle positioning.
//!
//! A vehicle (AV) observes downlink OFDM pilots from one or more gNBs and
//! L1-style spreading-code signals from GNSS satellites. For each anchor the
//! crate computes the Fisher information of the channel parameters it
//! exposes, maps it to the vehicle state `[p, v, b_u]`, eliminates the clock
//! bias with a Schur complement and reports position / velocity error bounds
//! (PEB / VEB).
//!
//! Module map:
//!
//! - [`geometry`]: coordinates and the observation equations (angles, Doppler, biased TOA)
//! - [`array`]: uniform rectangular arrays, steering vectors and their angle derivatives
//! - [`waveform`]: OFDM configuration, pilots, beam codebooks, the Doppler ICI operator
//! - [`fim`]: channel-parameter Fisher information (5G closed form + numeric oracle, GNSS)
//! - [`bounds`]: state transforms, total FIM, EFIM, PEB/VEB and identifiability
//! - [`scenario`]: scenario files, built-in scenarios, subset sweeps and CSV/JSON output
//! - [`oracle`]: independent finite-difference cross-checks used by tests and the CLI

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod bounds;
pub mod error;
pub mod fim;
pub mod geometry;
pub mod oracle;
pub mod quadrature;
pub mod scenario;
pub mod waveform;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
