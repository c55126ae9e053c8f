//! Auditing and post-processing for black-box binary scorers.
//!
//! Given any source of scores in [0, 1] and a labeled audit set, this crate
//! searches for identifiable subpopulations where the scorer is
//! systematically biased (auditing), iteratively corrects the scores with
//! partitioned multiplicative-weights updates in log-odds space (boosting),
//! and reports per-subgroup errors, bias certificates, and diagnostics.

pub mod audit;
pub mod baselines;
pub mod boost;
pub mod cli;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
