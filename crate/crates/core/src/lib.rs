//! Multi-cell massive MIMO uplink channel estimation.
//!
//! The crate simulates the uplink of a cellular network in which every base
//! station has a large antenna array and pilot sequences are reused across
//! cells. Five estimators are provided:
//!
//! - training-based least squares ([`estimators::ls_estimate`]),
//! - training-based MAP / MMSE ([`estimators::train_map_estimate`]),
//! - blind MAP from the SVD of the uplink data ([`estimators::blind_map_estimate`]),
//! - semi-blind MAP solved with L-BFGS ([`estimators::semi_blind_estimate`]),
//!   initialized by pilot-aware subspace projection ([`estimators::pasp_estimate`]),
//! - a genie-aided bound that knows the uplink data symbols
//!   ([`estimators::genie_bound_estimate`]).
//!
//! [`experiment`] runs Monte-Carlo drops over a wrap-around hexagonal layout
//! and writes subspace-angle and downlink-rate statistics as CSV.

pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod numerics;
pub mod oracle;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Dense complex matrix, column-major.
pub type CMat = nalgebra::DMatrix<C64>;
