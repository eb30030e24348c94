//! Configuration, orchestration, persistence and reporting for LGKDR-ABC
//! experiments.

pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod repro;
pub mod report;

pub use error::{HarnessError, Result};
