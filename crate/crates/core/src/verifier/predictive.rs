//! Checks on partially observed environments: wrong-mass control, the
//! non-identifiability counterexample, threshold recovery, and linear
//! predictive-state operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BoundReport, EstimateRecord, ReportInputs};
use crate::agents::{regret_profile, BetTable, BranchPolicy};
use crate::environments::{build_prop1_pair, enumerate_histories, pomdp::prop1, EvaluationDistribution, FinitePomdp, History};
use crate::error::{domain, LabError, Result};
use crate::estimators::{
    estimated_psr_matrices, linear_update_violation, psr_error_budget, psr_matrices, recover_psr_operators, PsrBudget,
};
use crate::goals::{
    all_sequences, confidently_high, confidently_low, fair_goal_value, margin_at_least, probability_table,
    test_probability, Test,
};
use crate::numerics::margin_constants;

/// Largest tolerated `‖s_σ(h) − B_σ s(h)‖₂` before the linear-update
/// assumption counts as failed.
pub const LINEAR_UPDATE_TOL: f64 = 1e-8;

/// Largest positive-probability event support enumerated exhaustively by
/// [`verify_prop1`].
const MAX_SUPPORT: usize = 12;

/// Masses of the large-margin and one-sided sets under `(H, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nondegeneracy {
    /// `Pr(m_T(h) ≥ γ)`.
    pub q_gamma: f64,
    /// `Pr(p_T(h) ≥ 1/2 + γ)`.
    pub eta: f64,
    /// `Pr(p_T(h) ≤ 1/2 − γ)`.
    pub eta_prime: f64,
}

/// Exact `(q_γ, η, η′)` for the probability table `probs[h][t]`.
pub fn measure_nondegeneracy(eval: &EvaluationDistribution, probs: &[Vec<f64>], gamma: f64) -> Result<Nondegeneracy> {
    margin_constants(gamma)?;
    if probs.len() != eval.histories.len() {
        return Err(LabError::Shape("one probability row per history is required".into()));
    }
    let mut out = Nondegeneracy {
        q_gamma: 0.0,
        eta: 0.0,
        eta_prime: 0.0,
    };
    for ((_, wh), row) in eval.histories.iter().zip(probs) {
        if row.len() != eval.tests.len() {
            return Err(LabError::Shape("one probability per test is required".into()));
        }
        for ((_, wt), &p) in eval.tests.iter().zip(row) {
            let w = wh * wt;
            if margin_at_least((p - 0.5).abs(), gamma) {
                out.q_gamma += w;
            }
            if confidently_high(p, gamma) {
                out.eta += w;
            }
            if confidently_low(p, gamma) {
                out.eta_prime += w;
            }
        }
    }
    Ok(out)
}

fn gamma_inputs(gamma: f64, delta_bar: f64) -> ReportInputs {
    ReportInputs {
        gamma: Some(gamma),
        delta_bar: Some(delta_bar),
        ..Default::default()
    }
}

/// Wrong-mass bound on a prepared fair-bet table. Returns the global row and,
/// when the large-margin set has mass, the conditional row.
pub fn verify_thm4_table(table: &BetTable, policy: &BranchPolicy, gamma: f64) -> Result<Vec<BoundReport>> {
    let mc = margin_constants(gamma)?;
    let profile = regret_profile(policy, table)?;
    let (mut lhs, mut q_gamma, mut eta, mut eta_prime) = (0.0, 0.0, 0.0, 0.0);
    for (h, wh) in table.history_weights.iter().enumerate() {
        for (g, (_, wg)) in table.goals.iter().enumerate() {
            let w = wh * wg;
            let value = &table.values[h][g];
            if margin_at_least(value.margin, gamma) {
                q_gamma += w;
                lhs += w * profile.wrong_mass[h][g];
            }
            if confidently_high(value.u_branch1, gamma) {
                eta += w;
            }
            if confidently_low(value.u_branch1, gamma) {
                eta_prime += w;
            }
        }
    }
    let delta_bar = profile.average;
    let rhs = delta_bar / mc.c_gamma;
    let mut global = BoundReport::new("thm4", lhs, rhs, Some(q_gamma), gamma_inputs(gamma, delta_bar))
        .with_detail("q_gamma", q_gamma)
        .with_detail("eta", eta)
        .with_detail("eta_prime", eta_prime);
    if eta == 0.0 || eta_prime == 0.0 {
        global.note("one-sided evaluation: eta or eta_prime is zero");
    }
    let mut out = vec![global];
    if q_gamma > 0.0 {
        let cond = BoundReport::new("thm4_conditional", lhs / q_gamma, rhs / q_gamma, Some(1.0), gamma_inputs(gamma, delta_bar))
            .with_detail("q_gamma", q_gamma);
        out.push(cond);
    } else {
        out[0].note("q_gamma = 0: conditional form skipped");
    }
    Ok(out)
}

/// Exact probabilities of `eval`'s tests at `eval`'s histories, row per history.
fn eval_probabilities(pomdp: &FinitePomdp, eval: &EvaluationDistribution) -> Result<Vec<Vec<f64>>> {
    let histories: Vec<History> = eval.histories.iter().map(|h| h.0.clone()).collect();
    probability_table(pomdp, &histories, &eval.test_list())
}

/// `E[w_T(h)·1{m_T(h) ≥ γ}] ≤ δ̄/c(γ)` under `(H, D)` on fair bets.
pub fn verify_thm4(
    pomdp: &FinitePomdp,
    policy: &BranchPolicy,
    eval: &EvaluationDistribution,
    gamma: f64,
) -> Result<Vec<BoundReport>> {
    let probs = eval_probabilities(pomdp, eval)?;
    verify_thm4_table(&BetTable::fair(eval, &probs), policy, gamma)
}

/// Compares the two environments of the non-identifiability pair on every
/// test up to `depth` after the history `(u)`. Left side: the number of tests
/// whose optimal fair bet differs (must be 0). Right side: 0. The largest
/// predictive-state gap is reported as a detail and must equal `|p − q|`.
///
/// Test probabilities depend on the event only through its intersection with
/// the positive-probability support, so each event class is represented by
/// that intersection alone and by its union with every null sequence.
pub fn verify_prop1(p: f64, q: f64, depth: usize) -> Result<BoundReport> {
    if depth == 0 {
        return domain("depth must be at least 1");
    }
    let (ep, eq) = build_prop1_pair(p, q)?;
    let h = History::initial(prop1::OBS_U);
    let (n_actions, n_obs) = (ep.n_actions(), ep.n_obs());
    let (mut disagreements, mut classes, mut max_gap) = (0usize, 0usize, 0.0f64);
    for k in 1..=depth {
        let seqs = all_sequences(n_obs, k);
        for alpha in all_sequences(n_actions, k) {
            let mut support = Vec::new();
            let mut null = Vec::new();
            for w in &seqs {
                let t = Test::singleton(alpha.clone(), w.clone());
                if test_probability(&ep, &h, &t)? > 0.0 || test_probability(&eq, &h, &t)? > 0.0 {
                    support.push(w.clone());
                } else {
                    null.push(w.clone());
                }
            }
            if support.len() > MAX_SUPPORT {
                return Err(LabError::CapExceeded {
                    what: "event support",
                    requested: support.len(),
                    cap: MAX_SUPPORT,
                });
            }
            for mask in 0u32..(1 << support.len()) {
                let core: Vec<Vec<usize>> = (0..support.len())
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| support[i].clone())
                    .collect();
                let mut representatives = Vec::with_capacity(2);
                if !core.is_empty() {
                    representatives.push(core.clone());
                }
                if !null.is_empty() {
                    representatives.push(core.iter().chain(&null).cloned().collect());
                }
                for event in representatives {
                    let t = Test::new(alpha.clone(), event.into_iter().collect())?;
                    let (pp, pq) = (test_probability(&ep, &h, &t)?, test_probability(&eq, &h, &t)?);
                    classes += 1;
                    if fair_goal_value(pp).branch1_optimal() != fair_goal_value(pq).branch1_optimal() {
                        disagreements += 1;
                    }
                    max_gap = max_gap.max((pp - pq).abs());
                }
            }
        }
    }
    let mut report = BoundReport::new("prop1", disagreements as f64, 0.0, None, ReportInputs::default())
        .with_detail("max_predictive_gap", max_gap)
        .with_detail("event_classes", classes as f64);
    if (max_gap - (p - q).abs()).abs() > 1e-12 {
        report.flag(format!("largest predictive gap {max_gap} differs from |p - q|"));
    }
    Ok(report)
}

/// `E[(p̂_T(h) − p_T(h))²] ≤ 2δ̄_K + 1/(4K²)` with the `K`-point threshold
/// estimator, on a prepared probability table.
pub fn verify_thm5_table(
    eval: &EvaluationDistribution,
    probs: &[Vec<f64>],
    policy: &BranchPolicy,
    k: usize,
) -> Result<BoundReport> {
    let table = BetTable::threshold(eval, probs, k)?;
    let profile = regret_profile(policy, &table)?;
    let test_weights = eval.test_weights();
    let (mut lhs, mut worst) = (0.0, 0.0f64);
    let mut records = Vec::new();
    for (h, (hist, wh)) in eval.histories.iter().enumerate() {
        for (t, (test, wt)) in eval.tests.iter().enumerate() {
            let mut q_sum = 0.0;
            for i in 0..k {
                q_sum += policy.q(&table.cell(h, t * k + i))?;
            }
            let est = q_sum / k as f64;
            let err = est - probs[h][t];
            lhs += wh * wt * err * err;
            worst = worst.max(err.abs());
            records.push(EstimateRecord {
                cell: format!("{hist}|{test}"),
                estimate: est,
                truth: probs[h][t],
            });
        }
    }
    debug_assert_eq!(test_weights.len(), eval.tests.len());
    let delta_bar = profile.average;
    let kf = k as f64;
    let rhs = 2.0 * delta_bar + 1.0 / (4.0 * kf * kf);
    let inputs = ReportInputs {
        k: Some(k),
        delta_bar: Some(delta_bar),
        ..Default::default()
    };
    let mut report = BoundReport::new("thm5", lhs, rhs, Some(1.0), inputs).with_detail("max_cell_error", worst);
    report.estimates = records;
    Ok(report)
}

pub fn verify_thm5(
    pomdp: &FinitePomdp,
    policy: &BranchPolicy,
    eval: &EvaluationDistribution,
    k: usize,
) -> Result<BoundReport> {
    let probs = eval_probabilities(pomdp, eval)?;
    verify_thm5_table(eval, &probs, policy, k)
}

fn budget_reports(budget: &PsrBudget, inputs: ReportInputs) -> Vec<BoundReport> {
    let max_sy = (budget.d * budget.d) as f64 * (1.0 + budget.n_sigma as f64);
    let sy = BoundReport::new("thm6_sy", budget.sy_error, budget.sy_bound, Some(max_sy), inputs.clone())
        .with_detail("kappa", budget.kappa);
    let mut cond = BoundReport::new("thm6_s_cond", budget.s_cond_lhs, budget.s_cond_rhs, None, inputs.clone())
        .with_detail("kappa", budget.kappa);
    let mut out = vec![sy];
    match (budget.b_error, budget.b_bound) {
        (Some(err), Some(bound)) => {
            out.push(cond);
            out.push(BoundReport::new("thm6_b", err, bound, None, inputs).with_detail("c_sy", budget.c_sy));
        }
        _ => {
            cond.vacuous = true;
            cond.note("invertibility condition fails: operator bound skipped");
            out.push(cond);
        }
    }
    out
}

/// Error budget of an estimated `(Ŝ, Ŷ_σ)` against a known `(S, Y_σ)` at
/// error level `epsilon`: the stacked-matrix bound, the invertibility
/// condition and, when it holds, the operator bound.
pub fn verify_psr_system(
    s: &DMatrix<f64>,
    ys: &[DMatrix<f64>],
    s_hat: &DMatrix<f64>,
    y_hats: &[DMatrix<f64>],
    epsilon: f64,
) -> Result<Vec<BoundReport>> {
    let budget = psr_error_budget(s, ys, s_hat, y_hats, epsilon)?;
    let inputs = ReportInputs {
        epsilon: Some(epsilon),
        ..Default::default()
    };
    Ok(budget_reports(&budget, inputs))
}

/// Operator recovery from threshold bets: checks the linear-update
/// assumption on every history up to length 2, then the error budget with
/// `ε_K = 2δ̄_K + 1/(4K²)`.
pub fn verify_thm6(
    pomdp: &FinitePomdp,
    tests: &[Test],
    histories: &[History],
    policy: &BranchPolicy,
    k: usize,
) -> Result<Vec<BoundReport>> {
    let (s, ys) = psr_matrices(pomdp, tests, histories)?;
    let exact = recover_psr_operators(&s, &ys)?;
    let mut sample = Vec::new();
    for len in 0..=2 {
        sample.extend(enumerate_histories(pomdp, len)?.into_iter().map(|h| h.0));
    }
    let violation = linear_update_violation(pomdp, tests, &exact.b_hats, &sample)?;
    let (s_hat, y_hats, delta_bar) = estimated_psr_matrices(policy, pomdp, tests, histories, k)?;
    let kf = k as f64;
    let epsilon = 2.0 * delta_bar + 1.0 / (4.0 * kf * kf);
    let inputs = ReportInputs {
        k: Some(k),
        delta_bar: Some(delta_bar),
        epsilon: Some(epsilon),
        ..Default::default()
    };
    let mut linear = BoundReport::new("thm6_linear_update", violation, LINEAR_UPDATE_TOL, None, inputs.clone())
        .with_detail("histories_checked", sample.len() as f64);
    if violation > LINEAR_UPDATE_TOL {
        linear.flag(format!("linear update violated by {violation:e}"));
    }
    let budget = psr_error_budget(&s, &ys, &s_hat, &y_hats, epsilon)?;
    let mut out = vec![linear];
    out.extend(budget_reports(&budget, inputs));
    Ok(out)
}
