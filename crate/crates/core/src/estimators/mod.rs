//! Recovery procedures: transition kernels from composite-goal branch
//! probabilities, predictive states from threshold bets, and linear-PSR
//! operators from estimated predictive states.

pub mod predictive;
pub mod psr;
pub mod transition;

pub use predictive::{compose_test, estimate_predictive_state, threshold_estimate, PredictiveStateEstimate};
pub use psr::{
    estimated_psr_matrices, linear_update_violation, psr_error_budget, psr_matrices, recover_psr_operators,
    select_basis_histories, PsrBudget, PsrOperators,
};
pub use transition::{estimate_transition, estimate_world_model, TransitionEstimate};
