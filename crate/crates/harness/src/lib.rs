//! Command-line orchestration for crystalflow: typed TOML configuration,
//! scenario runners, the cross-scale comparison experiment and atomic
//! artifact writers. The `crystalflow` binary is a thin layer over
//! [`scenarios::run`].

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

pub use error::{HarnessError, Result};

/// Environment variable capping the number of worker threads used for
/// replicate fan-out.
pub const THREADS_ENV: &str = "CRYSTALFLOW_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`]. Returns the cap when
/// one was applied. Must run before any parallel work starts.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| HarnessError::ConfigInvalid(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::ConfigInvalid(format!("cannot size the worker pool: {e}")))?;
    Ok(Some(n))
}
