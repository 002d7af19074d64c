//! Checks on fully observed environments and the structural-model pair.

use num_rational::Ratio;
use rand::Rng;

use super::{BoundReport, EstimateRecord, ReportInputs};
use crate::agents::BranchPolicy;
use crate::environments::{build_l3_pair, FiniteMdp, ScmModel};
use crate::error::{domain, LabError, Result};
use crate::estimators::{estimate_world_model, TransitionEstimate};
use crate::numerics::margin_constants;

/// `2t_γ·E[sqrt(p(1−p)/n)] + ((n+1)/n)·δ̄/c(γ) + 7/(2n)`; `None` when `t_γ`
/// is infinite.
pub fn thm1_rhs(kernel: &[f64], n: u64, gamma: f64, delta_bar: f64) -> Result<Option<f64>> {
    let mc = margin_constants(gamma)?;
    let Some(t) = mc.t_gamma else {
        return Ok(None);
    };
    let nf = n as f64;
    let spread = kernel.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).sum::<f64>() / kernel.len() as f64;
    Ok(Some(2.0 * t * spread + (nf + 1.0) / nf * delta_bar / mc.c_gamma + 3.5 / nf))
}

fn thm1_inputs(n: u64, gamma: f64, est: &TransitionEstimate) -> ReportInputs {
    ReportInputs {
        gamma: Some(gamma),
        n: Some(n),
        delta_bar: Some(est.average_regret),
        ..Default::default()
    }
}

fn estimate_records(est: &TransitionEstimate, truth: &[f64]) -> Vec<EstimateRecord> {
    let mut out = Vec::with_capacity(truth.len());
    for s in 0..est.n_states {
        for a in 0..est.n_actions {
            for s2 in 0..est.n_states {
                let i = (s * est.n_actions + a) * est.n_states + s2;
                out.push(EstimateRecord {
                    cell: format!("s{s}-a{a}-s{s2}"),
                    estimate: est.estimates[i],
                    truth: truth[i],
                });
            }
        }
    }
    out
}

fn bound_report(theorem: &str, lhs: f64, rhs: Option<f64>, n: u64, inputs: ReportInputs) -> BoundReport {
    let max_lhs = 1.0 + 0.5 / n as f64;
    match rhs {
        Some(rhs) => BoundReport::new(theorem, lhs, rhs, Some(max_lhs), inputs),
        None => {
            let mut r = BoundReport::new(theorem, lhs, f64::INFINITY, Some(max_lhs), inputs);
            r.note("t_gamma is infinite at gamma = 1/2");
            r
        }
    }
}

/// Mean absolute transition error of the composite-goal estimator against
/// the Chebyshev-plus-regret bound.
pub fn verify_thm1(mdp: &FiniteMdp, policy: &BranchPolicy, n: u64, gamma: f64) -> Result<BoundReport> {
    let est = estimate_world_model(policy, mdp, n)?;
    let rhs = thm1_rhs(mdp.kernel(), n, gamma, est.average_regret)?;
    let mut report = bound_report("thm1", est.mean_abs_error, rhs, n, thm1_inputs(n, gamma, &est));
    let worst = est
        .estimates
        .iter()
        .zip(&est.truth)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    report.details.insert("max_cell_error".into(), worst);
    report.estimates = estimate_records(&est, mdp.kernel());
    Ok(report)
}

/// Moves each row of `mdp` by a seeded zero-sum vector with entries of
/// magnitude at most `eps`, shrunk as needed to stay inside `[0, 1]`.
pub fn perturbed_kernel<R: Rng + ?Sized>(mdp: &FiniteMdp, eps: f64, rng: &mut R) -> Result<FiniteMdp> {
    if !(0.0..=1.0).contains(&eps) {
        return domain(format!("eps_cmp must lie in [0, 1], got {eps}"));
    }
    let mut out = mdp.clone();
    let ns = mdp.n_states();
    for s in 0..ns {
        for a in 0..mdp.n_actions() {
            let mut v: Vec<f64> = (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = v.iter().sum::<f64>() / ns as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if peak == 0.0 || eps == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|x| *x *= eps / peak);
            let row = mdp.row(s, a);
            let mut t = 1.0f64;
            for (p, d) in row.iter().zip(&v) {
                if *d > 0.0 {
                    t = t.min((1.0 - p) / d);
                } else if *d < 0.0 {
                    t = t.min(p / -d);
                }
            }
            let target = out.row_mut(s, a);
            for (slot, d) in target.iter_mut().zip(&v) {
                *slot = (*slot + t * d).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Shifts mass `eps` onto (`sign > 0`) or off (`sign < 0`) the single entry
/// `(s, a, s_next)`, compensating on the other entries of the row. `None`
/// when the entry cannot move.
pub fn saturated_kernel(mdp: &FiniteMdp, cell: (usize, usize, usize), eps: f64, sign: f64) -> Option<FiniteMdp> {
    let (s, a, target) = cell;
    let row = mdp.row(s, a).to_vec();
    let amount = if sign > 0.0 { eps.min(1.0 - row[target]) } else { eps.min(row[target]) };
    if amount <= 0.0 {
        return None;
    }
    let mut new_row = row.clone();
    new_row[target] += sign.signum() * amount;
    let mut others: Vec<usize> = (0..row.len()).filter(|&i| i != target).collect();
    let mut left = amount;
    if sign > 0.0 {
        others.sort_by(|&x, &y| row[y].total_cmp(&row[x]));
        for i in others {
            let take = left.min(new_row[i]);
            new_row[i] -= take;
            left -= take;
        }
    } else {
        others.sort_by(|&x, &y| row[x].total_cmp(&row[y]));
        for i in others {
            let give = left.min(1.0 - new_row[i]);
            new_row[i] += give;
            left -= give;
        }
    }
    if left > 1e-15 {
        return None;
    }
    let mut out = mdp.clone();
    out.row_mut(s, a).copy_from_slice(&new_row);
    Some(out)
}

fn cor1_report(
    est: &TransitionEstimate,
    mdp: &FiniteMdp,
    do_kernel: &FiniteMdp,
    n: u64,
    gamma: f64,
    eps_cmp: f64,
    theorem: &str,
) -> Result<BoundReport> {
    let lhs = est.mean_abs_error_against(do_kernel.kernel())?;
    let rhs = thm1_rhs(mdp.kernel(), n, gamma, est.average_regret)?.map(|r| r + eps_cmp);
    let deviation = mdp
        .kernel()
        .iter()
        .zip(do_kernel.kernel())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut inputs = thm1_inputs(n, gamma, est);
    inputs.epsilon = Some(eps_cmp);
    let mut report = bound_report(theorem, lhs, rhs, n, inputs).with_detail("kernel_deviation", deviation);
    if deviation > eps_cmp + 1e-12 {
        report.flag(format!("do-kernel deviates by {deviation:e}, above eps_cmp"));
    }
    report.estimates = estimate_records(est, do_kernel.kernel());
    Ok(report)
}

/// Estimator error against a seeded do-kernel within `eps_cmp` of the true kernel.
pub fn verify_cor1<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    policy: &BranchPolicy,
    n: u64,
    gamma: f64,
    eps_cmp: f64,
    rng: &mut R,
) -> Result<BoundReport> {
    let do_kernel = perturbed_kernel(mdp, eps_cmp, rng)?;
    let est = estimate_world_model(policy, mdp, n)?;
    cor1_report(&est, mdp, &do_kernel, n, gamma, eps_cmp, "cor1")
}

/// Worst case over every single-entry saturation of the `eps_cmp` budget.
pub fn verify_cor1_adversarial(
    mdp: &FiniteMdp,
    policy: &BranchPolicy,
    n: u64,
    gamma: f64,
    eps_cmp: f64,
) -> Result<BoundReport> {
    if !(0.0..=1.0).contains(&eps_cmp) {
        return domain(format!("eps_cmp must lie in [0, 1], got {eps_cmp}"));
    }
    let est = estimate_world_model(policy, mdp, n)?;
    let mut worst: Option<(f64, FiniteMdp)> = None;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for s2 in 0..mdp.n_states() {
                for sign in [1.0, -1.0] {
                    let Some(candidate) = saturated_kernel(mdp, (s, a, s2), eps_cmp, sign) else {
                        continue;
                    };
                    let lhs = est.mean_abs_error_against(candidate.kernel())?;
                    if worst.as_ref().is_none_or(|(w, _)| lhs > *w) {
                        worst = Some((lhs, candidate));
                    }
                }
            }
        }
    }
    let do_kernel = worst.map(|w| w.1).unwrap_or_else(|| mdp.clone());
    cor1_report(&est, mdp, &do_kernel, n, gamma, eps_cmp, "cor1_adversarial")
}

/// Equal interventional kernels (left side, must be 0) next to the largest
/// counterfactual disagreement (right side, must be 1).
pub fn verify_cor2() -> Result<BoundReport> {
    let pair = build_l3_pair();
    let kernel_gap = pair.kernel_gap();
    let table = pair.counterfactual_table()?;
    let cf_gap = table.iter().map(|(_, x, y)| x.abs_diff(*y)).max().unwrap_or(0);
    let lhs = *kernel_gap.numer() as f64 / *kernel_gap.denom() as f64;
    let mut report = BoundReport::new("cor2", lhs, cf_gap as f64, None, ReportInputs::default());
    if kernel_gap != Ratio::new(0, 1) {
        report.flag("interventional kernels differ");
    }
    if cf_gap == 0 {
        report.flag("no counterfactual cell separates the models");
    }
    let copy = ScmModel::Copy.counterfactual(0, 1, 1)?;
    let xor = ScmModel::Xor.counterfactual(0, 1, 1)?;
    if (copy, xor) != (1, 0) {
        return Err(LabError::Abduction(format!("unexpected counterfactuals ({copy}, {xor})")));
    }
    report.details.insert("copy_model_outcome".into(), copy as f64);
    report.details.insert("xor_model_outcome".into(), xor as f64);
    Ok(report)
}
