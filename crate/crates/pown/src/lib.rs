//! Dataset directories, checkpoints, configuration and the experiment
//! runner around `pown-core`.

pub mod config;
mod error;
pub mod experiment;
pub mod io;

pub use error::{Error, Result};
