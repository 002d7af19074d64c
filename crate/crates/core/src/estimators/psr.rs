use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::predictive::{compose_test, threshold_estimate};
use crate::agents::BranchPolicy;
use crate::environments::{filter_belief, FinitePomdp, History};
use crate::error::{LabError, Result};
use crate::goals::{test_probability_from_belief, Test};

/// Relative pivot tolerance of the LU solve: a pivot below
/// `SINGULAR_RTOL · d · max|entry|` is treated as zero.
pub const SINGULAR_RTOL: f64 = 1e-10;

/// Recovered operators `B̂_σ = Ŷ_σ Ŝ⁻¹` with conditioning diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PsrOperators {
    pub s_hat: DMatrix<f64>,
    pub y_hats: Vec<DMatrix<f64>>,
    pub b_hats: Vec<DMatrix<f64>>,
    /// `‖Ŝ⁻¹‖₂ = 1/σ_min(Ŝ)`.
    pub inverse_norm: f64,
    /// Smallest absolute LU pivot.
    pub min_pivot: f64,
    /// `max_σ ‖B̂_σ Ŝ − Ŷ_σ‖_F`.
    pub residual: f64,
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.min()
}

/// Solves for `B̂_σ` from `Ŝ` and `Ŷ_σ`; fails on a (numerically) singular `Ŝ`.
pub fn recover_psr_operators(s_hat: &DMatrix<f64>, y_hats: &[DMatrix<f64>]) -> Result<PsrOperators> {
    let d = s_hat.nrows();
    if d == 0 || s_hat.ncols() != d {
        return Err(LabError::Shape(format!("S must be square, got {}x{}", s_hat.nrows(), s_hat.ncols())));
    }
    if let Some(y) = y_hats.iter().find(|y| y.nrows() != d || y.ncols() != d) {
        return Err(LabError::Shape(format!("Y must be {d}x{d}, got {}x{}", y.nrows(), y.ncols())));
    }
    let scale = s_hat.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tolerance = SINGULAR_RTOL * d as f64 * scale;
    let sv = s_hat.clone().svd(false, false).singular_values;
    let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    // LU of Sᵀ: B Ŝ = Ŷ is Ŝᵀ Bᵀ = Ŷᵀ.
    let lu = s_hat.transpose().lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if scale == 0.0 || min_pivot <= tolerance {
        return Err(LabError::Singular {
            pivot: min_pivot,
            tolerance,
            condition,
        });
    }
    let mut b_hats = Vec::with_capacity(y_hats.len());
    let mut residual = 0.0f64;
    for y in y_hats {
        let bt = lu.solve(&y.transpose()).ok_or(LabError::Singular {
            pivot: min_pivot,
            tolerance,
            condition,
        })?;
        let b = bt.transpose();
        residual = residual.max((&b * s_hat - y).norm());
        b_hats.push(b);
    }
    Ok(PsrOperators {
        s_hat: s_hat.clone(),
        y_hats: y_hats.to_vec(),
        b_hats,
        inverse_norm: 1.0 / sv.min(),
        min_pivot,
        residual,
    })
}

/// Every quantity of the operator-recovery error budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrBudget {
    pub d: usize,
    pub n_sigma: usize,
    pub epsilon: f64,
    /// `‖Ŝ − S‖²_F + Σ_σ ‖Ŷ_σ − Y_σ‖²_F`.
    pub sy_error: f64,
    /// `d²(1 + |A||O|)·ε`.
    pub sy_bound: f64,
    /// `‖S⁻¹‖₂`.
    pub kappa: f64,
    /// `d·sqrt((1 + |A||O|)·ε)`.
    pub s_cond_lhs: f64,
    /// `1 / (2‖S⁻¹‖₂)`.
    pub s_cond_rhs: f64,
    pub s_cond_holds: bool,
    /// `8d²(1 + |A||O|)(κ² + κ⁴ Σ_σ ‖Y_σ‖²₂)`.
    pub c_sy: f64,
    /// `Σ_σ ‖B̂_σ − B_σ‖²_F`, when the invertibility condition holds.
    pub b_error: Option<f64>,
    /// `C(S, Y)·ε`, when the invertibility condition holds.
    pub b_bound: Option<f64>,
}

/// Evaluates the recovery budget of estimated `(Ŝ, Ŷ)` against exact `(S, Y)`
/// for an error level `epsilon`.
pub fn psr_error_budget(
    s: &DMatrix<f64>,
    ys: &[DMatrix<f64>],
    s_hat: &DMatrix<f64>,
    y_hats: &[DMatrix<f64>],
    epsilon: f64,
) -> Result<PsrBudget> {
    if ys.len() != y_hats.len() || s.shape() != s_hat.shape() {
        return Err(LabError::Shape("estimated and exact systems differ in shape".into()));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(LabError::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let d = s.nrows();
    let n_sigma = ys.len();
    let factor = 1.0 + n_sigma as f64;
    let sy_error = (s_hat - s).norm_squared() + ys.iter().zip(y_hats).map(|(y, yh)| (yh - y).norm_squared()).sum::<f64>();
    let sy_bound = (d * d) as f64 * factor * epsilon;
    let truth = recover_psr_operators(s, ys)?;
    let kappa = truth.inverse_norm;
    let s_cond_lhs = d as f64 * (factor * epsilon).sqrt();
    let s_cond_rhs = 1.0 / (2.0 * kappa);
    let s_cond_holds = s_cond_lhs <= s_cond_rhs;
    let y_norms: f64 = ys.iter().map(|y| spectral_norm(y).powi(2)).sum();
    let c_sy = 8.0 * (d * d) as f64 * factor * (kappa.powi(2) + kappa.powi(4) * y_norms);
    let (b_error, b_bound) = if s_cond_holds {
        let est = recover_psr_operators(s_hat, y_hats)?;
        let err = est
            .b_hats
            .iter()
            .zip(&truth.b_hats)
            .map(|(bh, b)| (bh - b).norm_squared())
            .sum::<f64>();
        (Some(err), Some(c_sy * epsilon))
    } else {
        (None, None)
    };
    Ok(PsrBudget {
        d,
        n_sigma,
        epsilon,
        sy_error,
        sy_bound,
        kappa,
        s_cond_lhs,
        s_cond_rhs,
        s_cond_holds,
        c_sy,
        b_error,
        b_bound,
    })
}

fn sigmas(pomdp: &FinitePomdp) -> Vec<(usize, usize)> {
    (0..pomdp.n_actions())
        .flat_map(|a| (0..pomdp.n_obs()).map(move |o| (a, o)))
        .collect()
}

fn predictive_vectors(pomdp: &FinitePomdp, h: &History, tests: &[Test]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let belief = filter_belief(pomdp, h)?;
    let s = tests
        .iter()
        .map(|t| test_probability_from_belief(pomdp, &belief, t))
        .collect::<Result<Vec<_>>>()?;
    let mut s_sigma = Vec::new();
    for sigma in sigmas(pomdp) {
        s_sigma.push(
            tests
                .iter()
                .map(|t| test_probability_from_belief(pomdp, &belief, &compose_test(sigma, t)?))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((s, s_sigma))
}

/// Exact `S = [s(h¹) … s(h^d)]` and `Y_σ`, with `σ = (a, o)` ordered by action
/// then observation.
pub fn psr_matrices(pomdp: &FinitePomdp, tests: &[Test], histories: &[History]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let d = tests.len();
    if histories.len() != d {
        return Err(LabError::Shape(format!("need {d} basis histories, got {}", histories.len())));
    }
    let n_sigma = pomdp.n_actions() * pomdp.n_obs();
    let mut s = DMatrix::zeros(d, d);
    let mut ys = vec![DMatrix::zeros(d, d); n_sigma];
    for (col, h) in histories.iter().enumerate() {
        let (sv, ssig) = predictive_vectors(pomdp, h, tests)?;
        for row in 0..d {
            s[(row, col)] = sv[row];
            for (y, v) in ys.iter_mut().zip(&ssig) {
                y[(row, col)] = v[row];
            }
        }
    }
    Ok((s, ys))
}

/// `Ŝ`, `Ŷ_σ` from threshold estimation with `K` grid points, plus the mean
/// threshold regret over every estimated entry. Entry `(j, i)` of `Ŝ` is goal
/// test `j` at history `i`; `Ŷ_σ` uses test index `(1 + σ)·d + j`.
pub fn estimated_psr_matrices(
    policy: &BranchPolicy,
    pomdp: &FinitePomdp,
    tests: &[Test],
    histories: &[History],
    k: usize,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>, f64)> {
    let (s, ys) = psr_matrices(pomdp, tests, histories)?;
    let d = tests.len();
    let mut regret = 0.0;
    let mut estimate = |m: &DMatrix<f64>, block: usize| -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let (est, r) = threshold_estimate(policy, m[(j, i)], Some(i), block * d + j, k)?;
                out[(j, i)] = est;
                regret += r;
            }
        }
        Ok(out)
    };
    let s_hat = estimate(&s, 0)?;
    let y_hats = ys
        .iter()
        .enumerate()
        .map(|(sig, y)| estimate(y, sig + 1))
        .collect::<Result<Vec<_>>>()?;
    let cells = (d * d * (1 + ys.len())) as f64;
    Ok((s_hat, y_hats, regret / cells))
}

/// `max_{h, σ} ‖s_σ(h) − B_σ s(h)‖₂` over `histories`.
pub fn linear_update_violation(
    pomdp: &FinitePomdp,
    tests: &[Test],
    b_ops: &[DMatrix<f64>],
    histories: &[History],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for h in histories {
        let (s, ssig) = predictive_vectors(pomdp, h, tests)?;
        let sv = nalgebra::DVector::from_vec(s);
        for (b, target) in b_ops.iter().zip(&ssig) {
            let pred = b * &sv;
            let diff = pred - nalgebra::DVector::from_vec(target.clone());
            worst = worst.max(diff.norm());
        }
    }
    Ok(worst)
}

/// Greedily picks `tests.len()` candidate histories maximizing the smallest
/// singular value of the growing `S`; returns candidate indices.
pub fn select_basis_histories(pomdp: &FinitePomdp, tests: &[Test], candidates: &[History]) -> Result<Vec<usize>> {
    let d = tests.len();
    let vectors: Vec<Vec<f64>> = candidates
        .iter()
        .map(|h| predictive_vectors(pomdp, h, tests).map(|v| v.0))
        .collect::<Result<_>>()?;
    let mut chosen: Vec<usize> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut best: Option<(usize, f64)> = None;
        for (c, _) in vectors.iter().enumerate() {
            if chosen.contains(&c) {
                continue;
            }
            let cols: Vec<usize> = chosen.iter().copied().chain(std::iter::once(c)).collect();
            let m = DMatrix::from_fn(d, cols.len(), |r, j| vectors[cols[j]][r]);
            let sigma = smallest_singular_value(&m);
            if best.is_none_or(|(_, b)| sigma > b) {
                best = Some((c, sigma));
            }
        }
        match best {
            Some((c, sigma)) if sigma > SINGULAR_RTOL => chosen.push(c),
            Some((_, sigma)) => {
                return Err(LabError::Singular {
                    pivot: sigma,
                    tolerance: SINGULAR_RTOL,
                    condition: f64::INFINITY,
                })
            }
            None => return Err(LabError::Shape("not enough candidate histories".into())),
        }
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::optimal_policy;
    use crate::environments::{dyadic_psr_environment, enumerate_histories};

    fn dyadic_setup() -> (FinitePomdp, Vec<Test>, Vec<History>) {
        let env = dyadic_psr_environment().unwrap();
        let tests = vec![Test::singleton(vec![0], vec![0]), Test::singleton(vec![1], vec![0])];
        let histories = vec![History::initial(0), History::initial(1)];
        (env, tests, histories)
    }

    #[test]
    fn exact_recovery_residual() {
        let (env, tests, hs) = dyadic_setup();
        let (s, ys) = psr_matrices(&env, &tests, &hs).unwrap();
        let ops = recover_psr_operators(&s, &ys).unwrap();
        assert!(ops.residual <= 1e-10);
        assert_eq!(ops.b_hats.len(), 4);
    }

    #[test]
    fn dyadic_linear_update_holds() {
        let (env, tests, hs) = dyadic_setup();
        let (s, ys) = psr_matrices(&env, &tests, &hs).unwrap();
        let ops = recover_psr_operators(&s, &ys).unwrap();
        let mut all = Vec::new();
        for len in 0..=2 {
            all.extend(enumerate_histories(&env, len).unwrap().into_iter().map(|h| h.0));
        }
        assert!(linear_update_violation(&env, &tests, &ops.b_hats, &all).unwrap() <= 1e-12);
    }

    #[test]
    fn k512_recovers_dyadic_system_exactly() {
        let (env, tests, hs) = dyadic_setup();
        let (s, ys) = psr_matrices(&env, &tests, &hs).unwrap();
        for m in std::iter::once(&s).chain(&ys) {
            for x in m.iter() {
                assert_eq!((x * 256.0).fract(), 0.0, "{x} is not a multiple of 1/256");
            }
        }
        let (s_hat, y_hats, regret) = estimated_psr_matrices(&optimal_policy(), &env, &tests, &hs, 512).unwrap();
        assert_eq!(regret, 0.0);
        assert_eq!(s_hat, s);
        let budget = psr_error_budget(&s, &ys, &s_hat, &y_hats, 1.0 / (4.0 * 512.0 * 512.0)).unwrap();
        assert!(budget.s_cond_holds);
        assert!(budget.b_error.unwrap().sqrt() <= 1e-6);
    }

    #[test]
    fn singular_input_is_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.25]);
        let y = DMatrix::identity(2, 2);
        assert!(matches!(recover_psr_operators(&s, &[y]), Err(LabError::Singular { .. })));
        assert!(recover_psr_operators(&DMatrix::zeros(2, 2), &[]).is_err());
        assert!(recover_psr_operators(&DMatrix::zeros(2, 3), &[]).is_err());
    }

    #[test]
    fn hand_built_noise_injection() {
        let s = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.3, 0.7]);
        let bs = [
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]),
            DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.1, 0.1]),
        ];
        let ys: Vec<DMatrix<f64>> = bs.iter().map(|b| b * &s).collect();
        let noise = 1e-3;
        let pattern = [1.0, -1.0, -0.5, 0.75];
        let perturb = |m: &DMatrix<f64>, shift: usize| {
            DMatrix::from_fn(2, 2, |r, c| m[(r, c)] + noise * pattern[(2 * r + c + shift) % 4])
        };
        let s_hat = perturb(&s, 0);
        let y_hats: Vec<DMatrix<f64>> = ys.iter().enumerate().map(|(i, y)| perturb(y, i + 1)).collect();
        let budget = psr_error_budget(&s, &ys, &s_hat, &y_hats, noise * noise).unwrap();
        assert!(budget.sy_error <= budget.sy_bound);
        assert!(budget.s_cond_holds);
        assert!(budget.b_error.unwrap() <= budget.b_bound.unwrap());
        let truth = recover_psr_operators(&s, &ys).unwrap();
        for (b, want) in truth.b_hats.iter().zip(&bs) {
            assert!((b - want).norm() < 1e-12);
        }
    }

    #[test]
    fn near_singular_s_fails_the_gate() {
        let s = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5005]);
        let ys = vec![DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.2, 0.2])];
        let budget = psr_error_budget(&s, &ys, &s, &ys, 1e-4).unwrap();
        assert!(!budget.s_cond_holds);
        assert!(budget.b_error.is_none());
        assert_eq!(budget.sy_error, 0.0);
    }

    #[test]
    fn greedy_basis() {
        let (env, tests, _) = dyadic_setup();
        let candidates: Vec<History> = enumerate_histories(&env, 1).unwrap().into_iter().map(|h| h.0).collect();
        let chosen = select_basis_histories(&env, &tests, &candidates).unwrap();
        assert_eq!(chosen.len(), 2);
        let hs: Vec<History> = chosen.iter().map(|&i| candidates[i].clone()).collect();
        let (s, _) = psr_matrices(&env, &tests, &hs).unwrap();
        assert!(smallest_singular_value(&s) > 1e-3);
    }
}
