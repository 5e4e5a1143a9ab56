//! Data, training, benchmarking and experiment drivers.

pub mod bench;
pub mod config;
pub mod data;
pub mod experiments;
pub mod synth;
pub mod train;
