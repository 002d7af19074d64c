//! Executable bound checks. Each check computes a left-hand side from exact
//! simulation and a right-hand side from the bound's formula, and reports
//! both with the slack between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub mod memory;
pub mod observed;
pub mod predictive;

pub use memory::{
    alias_mass, certify_recoding, decision_profile, mixture_tests, verify_cor3, verify_cor4, verify_cor5,
    verify_cor5_with, verify_thm7, verify_thm7_table, Label, Recoding,
};
pub use observed::{
    perturbed_kernel, saturated_kernel, thm1_rhs, verify_cor1, verify_cor1_adversarial, verify_cor2, verify_thm1,
};
pub use predictive::{
    measure_nondegeneracy, verify_prop1, verify_psr_system, verify_thm4, verify_thm4_table, verify_thm5,
    verify_thm5_table, verify_thm6, Nondegeneracy, LINEAR_UPDATE_TOL,
};

/// Arithmetic slack allowed when deciding `lhs ≤ rhs`.
pub const SATISFACTION_TOL: f64 = 1e-9;

/// Parameters a report was computed with; absent fields do not apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub gamma: Option<f64>,
    pub n: Option<u64>,
    pub k: Option<usize>,
    pub delta_bar: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}

/// One estimated quantity next to its exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub cell: String,
    pub estimate: f64,
    pub truth: f64,
}

impl EstimateRecord {
    pub fn abs_error(&self) -> f64 {
        (self.estimate - self.truth).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    /// `lhs ≤ rhs + 1e-9`.
    pub satisfied: bool,
    /// The right-hand side is at least the largest value the left-hand side
    /// can take, so the check carries no information.
    pub vacuous: bool,
    pub inputs: ReportInputs,
    /// Failed assumptions; any entry makes the run fail.
    pub assumption_flags: Vec<String>,
    /// Informational remarks that gate nothing.
    pub notes: Vec<String>,
    /// Auxiliary measured quantities.
    pub details: BTreeMap<String, f64>,
    #[serde(skip)]
    pub estimates: Vec<EstimateRecord>,
}

impl BoundReport {
    /// Builds a report; `max_lhs` is the largest value the left-hand side
    /// can take, used to detect vacuous bounds.
    pub fn new(theorem: &str, lhs: f64, rhs: f64, max_lhs: Option<f64>, inputs: ReportInputs) -> Self {
        let vacuous = max_lhs.is_some_and(|m| rhs >= m);
        Self {
            theorem: theorem.to_string(),
            lhs,
            rhs,
            slack: rhs - lhs,
            satisfied: lhs <= rhs + SATISFACTION_TOL,
            vacuous,
            inputs,
            assumption_flags: Vec::new(),
            notes: Vec::new(),
            details: BTreeMap::new(),
            estimates: Vec::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn flag(&mut self, msg: impl Into<String>) {
        self.assumption_flags.push(msg.into());
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    /// True when the report does not fail a run: satisfied or vacuous, with
    /// no failed assumption.
    pub fn passes(&self) -> bool {
        (self.satisfied || self.vacuous) && self.assumption_flags.is_empty()
    }
}
