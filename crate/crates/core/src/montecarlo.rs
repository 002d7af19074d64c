//! Seeded sampling estimates of quantities the rest of the crate computes
//! exactly, for cross-checking.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::{FiniteMdp, FinitePomdp, History};
use crate::error::{LabError, Result};
use crate::goals::{CompositeGoal, Test};

/// Steps a single composite-goal trajectory may take before giving up.
pub const MAX_TRAJECTORY_STEPS: usize = 1_000_000;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
            samples: xs.len(),
        }
    }

    /// `|mean − truth| ≤ z·se`, with the standard error floored at `1/N` so a
    /// run of identical draws still tolerates a rare unseen outcome.
    pub fn agrees_with(&self, truth: f64, z: f64) -> bool {
        let se = self.std_error.max(1.0 / self.samples.max(1) as f64);
        (self.mean - truth).abs() <= z * se
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(weights).map_err(|e| LabError::Domain(format!("cannot sample: {e}")))?;
    Ok(dist.sample(rng))
}

/// Estimates `p_T(h)` by simulating whole trajectories from the initial
/// distribution under `h`'s actions, rejecting those whose observations
/// differ from `h`, and running the test on the survivors. Stops after
/// `samples` accepted trajectories or `max_attempts` tries.
pub fn sample_test_probability<R: Rng + ?Sized>(
    pomdp: &FinitePomdp,
    h: &History,
    t: &Test,
    samples: usize,
    max_attempts: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    let mut outcomes = Vec::with_capacity(samples);
    let mut attempts = 0;
    let obs = h.observations();
    'trial: while outcomes.len() < samples {
        attempts += 1;
        if attempts > max_attempts {
            return Err(LabError::CapExceeded {
                what: "rejection attempts",
                requested: attempts,
                cap: max_attempts,
            });
        }
        let mut x = sample_index(pomdp.initial(), rng)?;
        if sample_index(pomdp.observation_row(x), rng)? != obs[0] {
            continue;
        }
        for (&a, &o) in h.actions().iter().zip(&obs[1..]) {
            x = sample_index(pomdp.transition_row(x, a), rng)?;
            if sample_index(pomdp.observation_row(x), rng)? != o {
                continue 'trial;
            }
        }
        let mut seen = Vec::with_capacity(t.depth());
        for &a in &t.actions {
            x = sample_index(pomdp.transition_row(x, a), rng)?;
            seen.push(sample_index(pomdp.observation_row(x), rng)?);
        }
        outcomes.push(if t.event.contains(&seen) { 1.0 } else { 0.0 });
    }
    Ok(MonteCarloEstimate::from_samples(&outcomes))
}

/// Runs one composite-goal trajectory: from an initial state, take uniformly
/// random actions until reaching `g.s`, then attempt `g.a`; repeat until `g.n`
/// attempts. Returns the number of attempts landing in `g.s_next`.
pub fn simulate_attempts<R: Rng + ?Sized>(mdp: &FiniteMdp, g: &CompositeGoal, rng: &mut R) -> Result<u64> {
    let mut s = sample_index(mdp.initial(), rng)?;
    let (mut attempts, mut successes) = (0u64, 0u64);
    for _ in 0..MAX_TRAJECTORY_STEPS {
        if attempts == g.n {
            return Ok(successes);
        }
        let a = if s == g.s { g.a } else { rng.gen_range(0..mdp.n_actions()) };
        let next = sample_index(mdp.row(s, a), rng)?;
        if s == g.s {
            attempts += 1;
            if next == g.s_next {
                successes += 1;
            }
        }
        s = next;
    }
    if attempts == g.n {
        return Ok(successes);
    }
    Err(LabError::CapExceeded {
        what: "trajectory steps",
        requested: MAX_TRAJECTORY_STEPS + 1,
        cap: MAX_TRAJECTORY_STEPS,
    })
}

/// Estimates branch 1's success probability `Pr(X ≤ k)` of a composite goal.
pub fn sample_composite_goal<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    g: &CompositeGoal,
    samples: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    let xs = (0..samples)
        .map(|_| simulate_attempts(mdp, g, rng).map(|x| if x <= g.k { 1.0 } else { 0.0 }))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloEstimate::from_samples(&xs))
}

/// Estimates the value of a stochastic bet: branch 1 w.p. `q`, then the
/// chosen branch succeeds w.p. `u_l` or `u_r`.
pub fn sample_bet_value<R: Rng + ?Sized>(u_l: f64, u_r: f64, q: f64, samples: usize, rng: &mut R) -> MonteCarloEstimate {
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            let u = if rng.gen_bool(q) { u_l } else { u_r };
            if rng.gen_bool(u) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    MonteCarloEstimate::from_samples(&xs)
}

/// Estimates `Σ_i w_i·x_i` by drawing cells `i ~ w`.
pub fn sample_expectation<R: Rng + ?Sized>(
    weights: &[f64],
    values: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if weights.len() != values.len() {
        return Err(LabError::Shape("one value per weight is required".into()));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| LabError::Domain(format!("cannot sample: {e}")))?;
    let xs: Vec<f64> = (0..samples).map(|_| values[dist.sample(rng)]).collect();
    Ok(MonteCarloEstimate::from_samples(&xs))
}
