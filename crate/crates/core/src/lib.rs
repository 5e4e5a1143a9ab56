//! Wavelet-integrated dual-stream feature extraction with crossmodal
//! rearranging fusion.
//!
//! Everything runs on a small dense tensor runtime with a tape-based reverse
//! pass ([`tensor`]). On top of it sit the Haar filter bank and adaptive DWT
//! layer ([`wavelet`]), the fusion module ([`cmrf`]), the backbones
//! ([`backbone`]), closed-form cost accounting ([`complexity`]) and the
//! data/training/benchmark tooling ([`harness`]).

pub mod backbone;
pub mod cli;
pub mod cmrf;
pub mod complexity;
pub mod error;
pub mod harness;
pub mod layers;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, Result};
