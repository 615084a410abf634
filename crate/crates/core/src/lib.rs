//! Gradient estimation for objectives with plateaus.
//!
//! The loss is convolved with a Gaussian over parameter space and the
//! gradient of the blurred loss is estimated from black-box evaluations
//! only. See [`estimator::estimate_gradient_score`].

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod optimizer;
pub mod oracle;
pub mod schedule;
pub mod tasks;

pub use error::{Error, Result, TaskError};
