//! Supply-chain simulation, production-function inference and link
//! prediction evaluation.

pub mod ariosim;
pub mod baselines;
pub mod dataset;
pub mod eval;
pub mod error;
pub mod firmgen;
pub mod invmodule;
pub mod netstats;
pub mod pipeline;
pub mod prodgen;
pub mod rng;

pub use error::{Error, Result};
