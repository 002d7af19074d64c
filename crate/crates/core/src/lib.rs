//! Simulation and verification laboratory for regret-based world-model
//! recovery: exact tabular environments, diagnostic betting goals, policies
//! with controlled regret, recovery estimators, and executable bound checks.

pub mod agents;
pub mod cli;
pub mod environments;
pub mod estimators;
pub mod error;
pub mod goals;
pub mod montecarlo;
pub mod numerics;
pub mod verifier;

pub use error::{LabError, Result};
