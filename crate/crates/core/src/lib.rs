//! Batch characterization of cluster-scheduler traces.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod digest;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod sum;
pub mod synth;
pub mod engine;
pub mod report;
