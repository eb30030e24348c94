//! Low-dimensional summary statistics for approximate Bayesian computation
//! via local gradient kernel dimension reduction (LGKDR), together with the
//! rejection and sequential Monte Carlo samplers that consume them.

pub mod crossval;
pub mod error;
pub mod format;
pub mod gkdr;
pub mod linalg;
pub mod seed;
pub mod samplers;
pub mod simulators;
pub mod summary;

pub use error::{Error, Result};
