//! Finite-alphabet rate-distortion, method-of-types and random-coding
//! simulation toolkit.
//!
//! Probability objects and the two convex solvers are generic over the
//! floating-point scalar; the aliases below fix it to `f32` or `f64`.
//! Everything downstream of the solvers (codes, channels, experiments) runs
//! in `f64`. All information quantities are in bits.

pub mod channel_code;
pub mod channels;
pub mod error;
pub mod layering;
pub mod multiuser;
pub mod prob;
pub mod rd;
pub mod scalar;
pub mod source_code;
pub mod stats;
pub mod typedp;

pub use error::{Error, Result};
pub use prob::{Alphabet, SeededRng, Sequence};
pub use scalar::Real;

pub type Distribution64 = prob::Distribution<f64>;
pub type Distribution32 = prob::Distribution<f32>;
pub type JointDistribution64 = prob::JointDistribution<f64>;
pub type JointDistribution32 = prob::JointDistribution<f32>;
pub type Kernel64 = prob::Kernel<f64>;
pub type Kernel32 = prob::Kernel<f32>;
pub type DistortionSpec64 = prob::DistortionSpec<f64>;
pub type DistortionSpec32 = prob::DistortionSpec<f32>;
pub type RdPoint64 = rd::RdPoint<f64>;
pub type RdPoint32 = rd::RdPoint<f32>;
pub type ExponentResult64 = rd::ExponentResult<f64>;
pub type ExponentResult32 = rd::ExponentResult<f32>;
