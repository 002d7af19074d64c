use serde::{Deserialize, Serialize};

use crate::agents::{BranchPolicy, DecisionCell, GoalKey};
use crate::environments::{filter_belief, FinitePomdp, History, DEFAULT_DEPTH_CAP};
use crate::error::{LabError, Result};
use crate::goals::{test_probability_from_belief, threshold_goal_value, threshold_grid, Test};
use crate::numerics::bet_regret;

/// `p̂_T(h)` per test, with the exact values alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveStateEstimate {
    pub values: Vec<f64>,
    pub truth: Vec<f64>,
    /// Mean over tests and grid points of the threshold-bet regret.
    pub average_regret: f64,
}

impl PredictiveStateEstimate {
    /// `(1/d)·‖η̂ − η‖²`.
    pub fn mean_squared_error(&self) -> f64 {
        let d = self.values.len().max(1) as f64;
        self.values.iter().zip(&self.truth).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / d
    }
}

/// Queries `policy` on the `K` threshold bets of one `(h, T)` cell with true
/// probability `p_true`; returns `(mean_k q_k, mean_k δ_k)`.
pub fn threshold_estimate(
    policy: &BranchPolicy,
    p_true: f64,
    history: Option<usize>,
    test: usize,
    k: usize,
) -> Result<(f64, f64)> {
    let grid = threshold_grid(k)?;
    let (mut q_sum, mut regret_sum) = (0.0, 0.0);
    for (i, &lambda) in grid.iter().enumerate() {
        let value = threshold_goal_value(p_true, lambda);
        let cell = DecisionCell {
            value,
            history,
            goal: GoalKey::Threshold { test, k: i },
        };
        let q = policy.q(&cell)?;
        q_sum += q;
        regret_sum += bet_regret(value.u_branch1, value.u_branch2, q)?.regret;
    }
    Ok((q_sum / k as f64, regret_sum / k as f64))
}

/// `p̂_T(h) = (1/K)·Σ_k q_{T, λ_k}(h)` for every test in `tests`.
pub fn estimate_predictive_state(
    policy: &BranchPolicy,
    pomdp: &FinitePomdp,
    h: &History,
    tests: &[Test],
    k: usize,
) -> Result<PredictiveStateEstimate> {
    let belief = filter_belief(pomdp, h)?;
    let mut values = Vec::with_capacity(tests.len());
    let mut truth = Vec::with_capacity(tests.len());
    let mut regret = 0.0;
    for (i, t) in tests.iter().enumerate() {
        if t.depth() > DEFAULT_DEPTH_CAP {
            return Err(LabError::CapExceeded {
                what: "test depth",
                requested: t.depth(),
                cap: DEFAULT_DEPTH_CAP,
            });
        }
        let p = test_probability_from_belief(pomdp, &belief, t)?;
        let (est, r) = threshold_estimate(policy, p, None, i, k)?;
        values.push(est);
        truth.push(p);
        regret += r;
    }
    Ok(PredictiveStateEstimate {
        values,
        truth,
        average_regret: regret / tests.len().max(1) as f64,
    })
}

/// `σ ∘ T = ((a, α), {o} × W)`.
pub fn compose_test(sigma: (usize, usize), t: &Test) -> Result<Test> {
    if t.depth() + 1 > DEFAULT_DEPTH_CAP {
        return Err(LabError::CapExceeded {
            what: "test depth",
            requested: t.depth() + 1,
            cap: DEFAULT_DEPTH_CAP,
        });
    }
    let (a, o) = sigma;
    let mut actions = Vec::with_capacity(t.depth() + 1);
    actions.push(a);
    actions.extend(&t.actions);
    let event = t
        .event
        .iter()
        .map(|w| {
            let mut seq = Vec::with_capacity(w.len() + 1);
            seq.push(o);
            seq.extend(w);
            seq
        })
        .collect();
    Test::new(actions, event)
}
