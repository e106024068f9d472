//! Uplink grant-free SCMA with a multi-antenna base station.
//!
//! The transmitter side builds sparse frames (symbol label, user signature,
//! data payload) for every active user; the receiver factors the observation
//! `Y = HX + Z` with BiG-AMP, then resolves the per-user phase and the row
//! permutation to identify users and recover their bits.
//!
//! Module map:
//!
//! - [`model`]: system configuration and derived quantities
//! - [`codebook`]: constellation, Gray mapping and sparse supports
//! - [`txframe`]: frame layout, user signatures and the signal matrix `X`
//! - [`channel`]: Rayleigh fading and AWGN
//! - [`bigamp`]: the bilinear AMP receiver
//! - [`detector`]: thresholding, phase correction, user matching, demapping
//! - [`harness`]: Monte-Carlo trials, sweeps, brute-force oracle and CSV output

pub mod assign;
pub mod bigamp;
pub mod channel;
pub mod codebook;
pub mod detector;
mod error;
pub mod harness;
pub mod model;
pub mod txframe;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
