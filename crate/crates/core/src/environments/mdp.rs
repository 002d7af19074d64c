use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Tolerance for row sums of stochastic tables.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A fully observed tabular environment `(S, A, P, μ0)`.
///
/// The kernel is stored flat in `[s][a][s']` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    initial: Vec<f64>,
}

/// Result of [`FiniteMdp::validate`] or [`super::FinitePomdp::validate`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Some `(s, a, a', s')` with `P[s][a][s'] != P[s][a'][s']`.
    pub action_dependence: Option<(usize, usize, usize, usize)>,
    /// Strong connectivity under "some action moves there"; `None` for POMDPs.
    pub communicating: Option<bool>,
    pub warnings: Vec<String>,
}

pub(crate) fn check_distribution(label: String, row: &[f64]) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(LabError::NotStochastic { row: label, sum });
    }
    Ok(())
}

pub(crate) fn dirichlet_row<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

impl FiniteMdp {
    pub fn new(n_states: usize, n_actions: usize, kernel: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        if n_states == 0 {
            return Err(LabError::Shape("an MDP needs at least one state".into()));
        }
        if n_actions < 2 {
            return Err(LabError::Shape(format!("an MDP needs at least two actions, got {n_actions}")));
        }
        if kernel.len() != n_states * n_actions * n_states {
            return Err(LabError::Shape(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                n_states * n_actions * n_states
            )));
        }
        if initial.len() != n_states {
            return Err(LabError::Shape(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            kernel,
            initial,
        })
    }

    /// Builds from a nested `[s][a][s']` table.
    pub fn from_nested(kernel: &[Vec<Vec<f64>>], initial: Vec<f64>) -> Result<Self> {
        let n_states = kernel.len();
        let n_actions = kernel.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in kernel.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(LabError::Shape(format!("state {s} has {} action rows", per_action.len())));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(LabError::Shape(format!("row ({s},{a}) has {} entries", row.len())));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(n_states, n_actions, flat, initial)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.row(s, a).to_vec()).collect())
            .collect()
    }

    /// Every row drawn from a flat Dirichlet, so every entry is positive and
    /// the chain is communicating. Initial distribution is uniform.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Result<Self> {
        let mut kernel = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            kernel.extend(dirichlet_row(n_states, rng));
        }
        Self::new(n_states, n_actions, kernel, vec![1.0 / n_states as f64; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.kernel[(s * self.n_actions + a) * self.n_states + s_next]
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    pub(crate) fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &mut self.kernel[start..start + self.n_states]
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Stochasticity is an error; missing action dependence is a warning.
    pub fn validate(&self) -> Result<ValidationReport> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                check_distribution(format!("P[{s}][{a}]"), self.row(s, a))?;
            }
        }
        check_distribution("initial".into(), &self.initial)?;

        let mut report = ValidationReport {
            action_dependence: self.action_dependence_witness(),
            communicating: Some(self.is_communicating()),
            warnings: Vec::new(),
        };
        if report.action_dependence.is_none() {
            report
                .warnings
                .push("kernel does not depend on the action".to_string());
        }
        if report.communicating == Some(false) {
            report.warnings.push("environment is not communicating".to_string());
        }
        Ok(report)
    }

    pub fn action_dependence_witness(&self) -> Option<(usize, usize, usize, usize)> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for b in (a + 1)..self.n_actions {
                    for t in 0..self.n_states {
                        if self.prob(s, a, t) != self.prob(s, b, t) {
                            return Some((s, a, b, t));
                        }
                    }
                }
            }
        }
        None
    }

    /// Strong connectivity of the graph with an edge `s → s'` whenever some
    /// action reaches `s'` from `s` with positive probability.
    pub fn is_communicating(&self) -> bool {
        let n = self.n_states;
        let edge = |s: usize, t: usize| (0..self.n_actions).any(|a| self.prob(s, a, t) > 0.0);
        let reach_all = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                for (v, mark) in seen.iter_mut().enumerate() {
                    let linked = if forward { edge(u, v) } else { edge(v, u) };
                    if linked && !*mark {
                        *mark = true;
                        queue.push_back(v);
                    }
                }
            }
            seen.into_iter().all(|x| x)
        };
        reach_all(true) && reach_all(false)
    }
}
