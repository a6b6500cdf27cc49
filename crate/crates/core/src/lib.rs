//! Spatial one-bit Sigma-Delta quantization for massive-MIMO uplink arrays.
//!
//! The crate synthesizes uniform-linear-array snapshots, quantizes them with
//! either a bank of independent one-bit converters or an angle-steered
//! spatial Sigma-Delta chain, and provides the equivalent linear model used to
//! predict quantization-noise spectra and uplink spectral efficiency. Every
//! closed form has a Monte Carlo counterpart so the two can be checked against
//! each other.
//!
//! Conventions used throughout:
//!
//! * A circularly-symmetric complex Gaussian of variance `v` has independent
//!   real and imaginary parts of variance `v / 2` each.
//! * Antennas are indexed from zero; the steering vector entry for antenna `m`
//!   is `exp(-j 2π (d/λ) u m)` with `u = sin θ`.
//! * Angles are radians internally, SNR is linear internally. The thermal noise
//!   power defaults to one, so `p0 = SNR`.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array_model;
pub mod chan_est;
pub mod config;
mod error;
pub mod experiments;
pub mod linalg;
pub mod montecarlo;
pub mod noise_spectrum;
pub mod quadrature;
pub mod quantization;
pub mod receivers;
pub mod rng;
pub mod sigma_delta;
pub mod validate;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

pub use array_model::{ArrayGeometry, ChannelRealization, DoaMode, PhiSetting, Scenario};
pub use quantization::QuantizerBank;
pub use receivers::{Architecture, CsiMode, ReceiverKind, SeResult};
pub use sigma_delta::{SdNoiseModel, SdStructure};
