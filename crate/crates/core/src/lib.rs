//! Cycle-count-accurate simulation and design-space exploration for
//! sparsity-aware spiking neural network accelerators.

pub mod accel;
pub mod cli;
pub mod config;
pub mod cost;
pub mod dse;
pub mod error;
pub mod golden;
pub mod mapping;
pub mod model;
pub mod spike_io;

pub use error::{Error, Result};
