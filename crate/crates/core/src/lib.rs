//! Federated phased elimination for linear contextual bandits.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: pseudo-inverses, pseudo-determinants and rank utilities for
//!   singular PSD matrices.
//! - [`design`]: the multi-client G-optimal design problem and its solvers.
//! - [`protocol`]: client/server state machines for Fed-PE, the enhanced
//!   variant and the shared-parameter variant, plus phase schedules.
//! - [`env`]: bandit instances, synthetic generation and the instance file.
//! - [`baselines`]: local UCB1 and the collaborative full-information policy.
//! - [`harness`]: regret and communication metrics and the experiment runner.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric loops index several parallel arrays.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod design;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod protocol;
pub mod trace;

pub use error::{Error, Result};
