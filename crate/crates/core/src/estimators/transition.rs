use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{BranchPolicy, DecisionCell, GoalKey};
use crate::environments::FiniteMdp;
use crate::error::{domain, LabError, Result};
use crate::goals::{composite_cell_values, CompositeGoal};
use crate::numerics::bet_regret;

/// `(Σ_k (1 − q_k) − 1/2) / n` over the thresholds `k = 0..=n`, unclamped.
pub fn estimate_transition(q_row: &[f64], n: u64) -> Result<f64> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    if q_row.len() as u64 != n + 1 {
        return domain(format!("expected {} branch probabilities, got {}", n + 1, q_row.len()));
    }
    if let Some(q) = q_row.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return domain(format!("branch probability {q} is outside [0, 1]"));
    }
    let switched: f64 = q_row.iter().map(|q| 1.0 - q).sum();
    Ok((switched - 0.5) / n as f64)
}

/// Estimated kernel for every `(s, a, s')`, flat in `[s][a][s']` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub n_states: usize,
    pub n_actions: usize,
    pub n: u64,
    pub estimates: Vec<f64>,
    pub truth: Vec<f64>,
    /// Uniform mean over `S × A × S` of `|p̂ − p|`.
    pub mean_abs_error: f64,
    /// Uniform mean over `S × A × S × {0..n}` of the normalized regret.
    pub average_regret: f64,
}

impl TransitionEstimate {
    pub fn get(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.estimates[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Estimates clipped to `[0, 1]`.
    pub fn clamped(&self) -> Vec<f64> {
        self.estimates.iter().map(|p| p.clamp(0.0, 1.0)).collect()
    }

    /// Mean absolute error against another kernel of the same shape.
    pub fn mean_abs_error_against(&self, kernel: &[f64]) -> Result<f64> {
        if kernel.len() != self.estimates.len() {
            return Err(LabError::Shape("kernel shape does not match the estimate".into()));
        }
        Ok(self.estimates.iter().zip(kernel).map(|(x, y)| (x - y).abs()).sum::<f64>() / kernel.len() as f64)
    }
}

/// Queries `policy` on every composite goal of depth `n` and applies
/// [`estimate_transition`] per cell.
pub fn estimate_world_model(policy: &BranchPolicy, mdp: &FiniteMdp, n: u64) -> Result<TransitionEstimate> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let cells: Vec<(usize, usize, usize)> = (0..ns)
        .flat_map(|s| (0..na).flat_map(move |a| (0..ns).map(move |s2| (s, a, s2))))
        .collect();
    let per_cell: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(s, a, s_next)| {
            let values = composite_cell_values(mdp, s, a, s_next, n)?;
            let mut qs = Vec::with_capacity(values.len());
            let mut regret = 0.0;
            for (k, value) in values.iter().enumerate() {
                let cell = DecisionCell {
                    value: *value,
                    history: None,
                    goal: GoalKey::Composite(CompositeGoal {
                        s,
                        a,
                        s_next,
                        n,
                        k: k as u64,
                    }),
                };
                let q = policy.q(&cell)?;
                regret += bet_regret(value.u_branch1, value.u_branch2, q)?.regret;
                qs.push(q);
            }
            Ok((estimate_transition(&qs, n)?, regret))
        })
        .collect::<Result<_>>()?;
    let estimates: Vec<f64> = per_cell.iter().map(|c| c.0).collect();
    let truth = mdp.kernel().to_vec();
    let mean_abs_error = estimates.iter().zip(&truth).map(|(x, y)| (x - y).abs()).sum::<f64>() / truth.len() as f64;
    let average_regret = per_cell.iter().map(|c| c.1).sum::<f64>() / (truth.len() as f64 * (n + 1) as f64);
    Ok(TransitionEstimate {
        n_states: ns,
        n_actions: na,
        n,
        estimates,
        truth,
        mean_abs_error,
        average_regret,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{noisy_policy, optimal_policy};
    use crate::numerics::Binomial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn optimal_row(n: u64, p: f64) -> Vec<f64> {
        let med = Binomial::new(n, p).unwrap().median();
        (0..=n).map(|k| if k >= med { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(estimate_transition(&optimal_row(4, 0.5), 4).unwrap(), 0.375);
        assert_eq!(estimate_transition(&optimal_row(10, 0.3), 10).unwrap(), 0.25);
        assert_eq!(estimate_transition(&[1.0; 6], 5).unwrap(), -0.1);
        assert!(estimate_transition(&[1.0; 5], 5).is_err());
    }

    #[test]
    fn affine_in_each_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 8;
        let row: Vec<f64> = (0..=n).map(|_| rng.gen()).collect();
        let base = estimate_transition(&row, n).unwrap();
        for k in 0..=n as usize {
            let mut bumped = row.clone();
            bumped[k] = (bumped[k] + 0.25).min(1.0);
            let delta = bumped[k] - row[k];
            let moved = estimate_transition(&bumped, n).unwrap();
            assert!((moved - base + delta / n as f64).abs() < 1e-14);
        }
        let mut shuffled = row.clone();
        shuffled.reverse();
        assert!((estimate_transition(&shuffled, n).unwrap() - base).abs() < 1e-14);
    }

    #[test]
    fn zero_regret_cells_within_two_over_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..8 {
            let ns = rng.gen_range(2..=6);
            let na = rng.gen_range(2..=3);
            let mdp = FiniteMdp::random(ns, na, &mut rng).unwrap();
            for &n in &[10u64, 20, 50, 100, 200] {
                let est = estimate_world_model(&optimal_policy(), &mdp, n).unwrap();
                assert_eq!(est.average_regret, 0.0);
                for (x, y) in est.estimates.iter().zip(&est.truth) {
                    assert!((x - y).abs() <= 2.0 / n as f64 + 1e-12);
                }
                assert!(est.mean_abs_error <= 2.0 / n as f64);
            }
        }
    }

    #[test]
    fn noisy_estimates_keep_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdp = FiniteMdp::random(3, 2, &mut rng).unwrap();
        let n = 20;
        let est = estimate_world_model(&noisy_policy(0.3, optimal_policy()).unwrap(), &mdp, n).unwrap();
        let lo = -1.0 / (2.0 * n as f64);
        let hi = (n as f64 + 0.5) / n as f64;
        assert!(est.estimates.iter().all(|p| (lo..=hi).contains(p)));
        assert!(est.clamped().iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(est.average_regret > 0.0);
    }

    #[test]
    fn action_independent_kernel_gives_equal_estimates() {
        let row = [vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2], vec![0.1, 0.1, 0.8]];
        let kernel: Vec<Vec<Vec<f64>>> = row.iter().map(|r| vec![r.clone(); 2]).collect();
        let mdp = FiniteMdp::from_nested(&kernel, vec![1.0, 0.0, 0.0]).unwrap();
        let est = estimate_world_model(&optimal_policy(), &mdp, 50).unwrap();
        for s in 0..3 {
            for s2 in 0..3 {
                assert_eq!(est.get(s, 0, s2), est.get(s, 1, s2));
            }
        }
    }
}
