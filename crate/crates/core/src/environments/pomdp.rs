use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{check_distribution, dirichlet_row, ValidationReport};
use crate::error::{domain, LabError, Result};

/// Default cap on history length and test depth.
pub const DEFAULT_DEPTH_CAP: usize = 4;

/// Finite POMDP `(X, A, O, T, Z, μ0)` with flat tables `T[x][a][x']` and `Z[x][o]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePomdp {
    n_latent: usize,
    n_actions: usize,
    n_obs: usize,
    transition: Vec<f64>,
    observation: Vec<f64>,
    initial: Vec<f64>,
}

/// `(o_0, a_0, o_1, …, a_{t-1}, o_t)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct History {
    observations: Vec<usize>,
    actions: Vec<usize>,
}

impl History {
    pub fn new(observations: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if observations.len() != actions.len() + 1 {
            return Err(LabError::Shape(format!(
                "a history needs one more observation than actions ({} vs {})",
                observations.len(),
                actions.len()
            )));
        }
        Ok(Self {
            observations,
            actions,
        })
    }

    pub fn initial(o: usize) -> Self {
        Self {
            observations: vec![o],
            actions: Vec::new(),
        }
    }

    pub fn extended(&self, a: usize, o: usize) -> Self {
        let mut next = self.clone();
        next.actions.push(a);
        next.observations.push(o);
        next
    }

    pub fn observations(&self) -> &[usize] {
        &self.observations
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Number of actions taken, i.e. `t`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last_observation(&self) -> usize {
        *self.observations.last().expect("history has at least one observation")
    }
}

impl std::fmt::Display for History {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "o{}", self.observations[0])?;
        for (a, o) in self.actions.iter().zip(&self.observations[1..]) {
            write!(f, "-a{a}-o{o}")?;
        }
        Ok(())
    }
}

/// Posterior over latent states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub weights: Vec<f64>,
}

impl FinitePomdp {
    pub fn new(
        n_latent: usize,
        n_actions: usize,
        n_obs: usize,
        transition: Vec<f64>,
        observation: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_latent == 0 || n_obs == 0 {
            return Err(LabError::Shape("a POMDP needs latent states and observations".into()));
        }
        if n_actions < 2 {
            return Err(LabError::Shape(format!("a POMDP needs at least two actions, got {n_actions}")));
        }
        if transition.len() != n_latent * n_actions * n_latent {
            return Err(LabError::Shape(format!("transition table has {} entries", transition.len())));
        }
        if observation.len() != n_latent * n_obs {
            return Err(LabError::Shape(format!("observation table has {} entries", observation.len())));
        }
        if initial.len() != n_latent {
            return Err(LabError::Shape(format!("initial distribution has {} entries", initial.len())));
        }
        let pomdp = Self {
            n_latent,
            n_actions,
            n_obs,
            transition,
            observation,
            initial,
        };
        Ok(pomdp)
    }

    pub fn from_nested(transition: &[Vec<Vec<f64>>], observation: &[Vec<f64>], initial: Vec<f64>) -> Result<Self> {
        let n_latent = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let n_obs = observation.first().map_or(0, Vec::len);
        if observation.len() != n_latent {
            return Err(LabError::Shape(format!("observation table has {} rows", observation.len())));
        }
        let mut t = Vec::new();
        for (x, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(LabError::Shape(format!("latent {x} has {} action rows", per_action.len())));
            }
            for row in per_action {
                if row.len() != n_latent {
                    return Err(LabError::Shape(format!("transition row for latent {x} is ragged")));
                }
                t.extend_from_slice(row);
            }
        }
        let mut z = Vec::new();
        for row in observation {
            if row.len() != n_obs {
                return Err(LabError::Shape("observation table is ragged".into()));
            }
            z.extend_from_slice(row);
        }
        Self::new(n_latent, n_actions, n_obs, t, z, initial)
    }

    pub fn to_nested(&self) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let t = (0..self.n_latent)
            .map(|x| (0..self.n_actions).map(|a| self.transition_row(x, a).to_vec()).collect())
            .collect();
        let z = (0..self.n_latent).map(|x| self.observation_row(x).to_vec()).collect();
        (t, z)
    }

    /// Dirichlet-random tables with a uniform initial distribution.
    pub fn random<R: Rng + ?Sized>(n_latent: usize, n_actions: usize, n_obs: usize, rng: &mut R) -> Result<Self> {
        let mut t = Vec::new();
        for _ in 0..n_latent * n_actions {
            t.extend(dirichlet_row(n_latent, rng));
        }
        let mut z = Vec::new();
        for _ in 0..n_latent {
            z.extend(dirichlet_row(n_obs, rng));
        }
        Self::new(n_latent, n_actions, n_obs, t, z, vec![1.0 / n_latent as f64; n_latent])
    }

    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, x: usize, a: usize, x_next: usize) -> f64 {
        self.transition[(x * self.n_actions + a) * self.n_latent + x_next]
    }

    pub fn transition_row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_latent;
        &self.transition[start..start + self.n_latent]
    }

    pub fn observe(&self, x: usize, o: usize) -> f64 {
        self.observation[x * self.n_obs + o]
    }

    pub fn observation_row(&self, x: usize) -> &[f64] {
        &self.observation[x * self.n_obs..(x + 1) * self.n_obs]
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        for x in 0..self.n_latent {
            for a in 0..self.n_actions {
                check_distribution(format!("T[{x}][{a}]"), self.transition_row(x, a))?;
            }
            check_distribution(format!("Z[{x}]"), self.observation_row(x))?;
        }
        check_distribution("initial".into(), &self.initial)?;
        let mut witness = None;
        'outer: for x in 0..self.n_latent {
            for a in 0..self.n_actions {
                for b in (a + 1)..self.n_actions {
                    for y in 0..self.n_latent {
                        if self.transition(x, a, y) != self.transition(x, b, y) {
                            witness = Some((x, a, b, y));
                            break 'outer;
                        }
                    }
                }
            }
        }
        let mut warnings = Vec::new();
        if witness.is_none() {
            warnings.push("transition kernel does not depend on the action".to_string());
        }
        Ok(ValidationReport {
            action_dependence: witness,
            communicating: None,
            warnings,
        })
    }

    fn check_history(&self, h: &History) -> Result<()> {
        if h.observations.iter().any(|&o| o >= self.n_obs) || h.actions.iter().any(|&a| a >= self.n_actions) {
            return domain(format!("history {h} uses symbols outside the environment"));
        }
        Ok(())
    }

    /// Pushes a latent vector one step through action `a`, then weights by
    /// the likelihood of observation `o`.
    pub(crate) fn step(&self, weights: &[f64], a: usize, o: usize) -> Vec<f64> {
        let mut next = vec![0.0; self.n_latent];
        for (x, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (y, slot) in next.iter_mut().enumerate() {
                *slot += w * self.transition(x, a, y);
            }
        }
        for (y, slot) in next.iter_mut().enumerate() {
            *slot *= self.observe(y, o);
        }
        next
    }

    /// Unnormalized forward vector `α_t(x) = Pr(o_{0:t}, x_t = x | a_{0:t-1})`.
    pub fn forward(&self, h: &History) -> Result<Vec<f64>> {
        self.check_history(h)?;
        let o0 = h.observations[0];
        let mut alpha: Vec<f64> = (0..self.n_latent).map(|x| self.initial[x] * self.observe(x, o0)).collect();
        for (&a, &o) in h.actions.iter().zip(&h.observations[1..]) {
            alpha = self.step(&alpha, a, o);
        }
        Ok(alpha)
    }

    /// `Pr(o_{0:t} | a_{0:t-1})`, with actions conditioned on.
    pub fn observation_likelihood(&self, h: &History) -> Result<f64> {
        Ok(self.forward(h)?.iter().sum())
    }

    /// Probability of `h` when actions are drawn uniformly at random.
    pub fn reference_probability(&self, h: &History) -> Result<f64> {
        Ok(self.observation_likelihood(h)? * (self.n_actions as f64).powi(-(h.len() as i32)))
    }
}

/// Posterior over latent states given `h`.
pub fn filter_belief(pomdp: &FinitePomdp, h: &History) -> Result<Belief> {
    let alpha = pomdp.forward(h)?;
    let total: f64 = alpha.iter().sum();
    if total <= 0.0 {
        return Err(LabError::ZeroProbability);
    }
    Ok(Belief {
        weights: alpha.into_iter().map(|w| w / total).collect(),
    })
}

/// Every positive-probability history of exactly `length` steps, weighted by
/// its probability under uniformly random actions. Order is lexicographic in
/// `(o_0, a_0, o_1, …)`.
pub fn enumerate_histories(pomdp: &FinitePomdp, length: usize) -> Result<Vec<(History, f64)>> {
    enumerate_histories_capped(pomdp, length, DEFAULT_DEPTH_CAP)
}

pub fn enumerate_histories_capped(pomdp: &FinitePomdp, length: usize, cap: usize) -> Result<Vec<(History, f64)>> {
    if length > cap {
        return Err(LabError::CapExceeded {
            what: "history length",
            requested: length,
            cap,
        });
    }
    let mut frontier: Vec<(History, Vec<f64>)> = (0..pomdp.n_obs())
        .filter_map(|o| {
            let alpha: Vec<f64> = (0..pomdp.n_latent()).map(|x| pomdp.initial()[x] * pomdp.observe(x, o)).collect();
            (alpha.iter().sum::<f64>() > 0.0).then(|| (History::initial(o), alpha))
        })
        .collect();
    let action_weight = 1.0 / pomdp.n_actions() as f64;
    for _ in 0..length {
        let mut next = Vec::with_capacity(frontier.len() * pomdp.n_actions() * pomdp.n_obs());
        for (h, alpha) in &frontier {
            for a in 0..pomdp.n_actions() {
                for o in 0..pomdp.n_obs() {
                    let stepped: Vec<f64> = pomdp.step(alpha, a, o).into_iter().map(|w| w * action_weight).collect();
                    if stepped.iter().sum::<f64>() > 0.0 {
                        next.push((h.extended(a, o), stepped));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(frontier
        .into_iter()
        .map(|(h, alpha)| {
            let w = alpha.iter().sum();
            (h, w)
        })
        .collect())
}

/// Observation indices of the non-identifiability construction.
pub mod prop1 {
    /// Uninformative observation emitted by `x0`, `x1`.
    pub const OBS_U: usize = 0;
    /// Observation "0", emitted by the absorbing state `y0`.
    pub const OBS_ZERO: usize = 1;
    /// Observation "1", emitted by the absorbing state `y1`.
    pub const OBS_ONE: usize = 2;
    /// Latent order: `x0, x1, y0, y1`.
    pub const LATENT: [&str; 4] = ["x0", "x1", "y0", "y1"];
}

/// Four latent states `x0, x1, y0, y1`; three observations `u, 0, 1`.
/// `μ0 = (r, 1−r, 0, 0)`; `x_i` moves to `y_i` and `y_i` is absorbing under
/// every action, so after `(u)` the future is `0^k` w.p. `r` and `1^k` otherwise.
pub fn prop1_environment(r: f64, n_actions: usize) -> Result<FinitePomdp> {
    if !(0.0..=1.0).contains(&r) {
        return domain(format!("r must be a probability, got {r}"));
    }
    let moves = [2usize, 3, 2, 3];
    let mut t = Vec::new();
    for &target in &moves {
        for _ in 0..n_actions {
            let mut row = vec![0.0; 4];
            row[target] = 1.0;
            t.push(row);
        }
    }
    let transition: Vec<Vec<Vec<f64>>> = t.chunks(n_actions).map(|c| c.to_vec()).collect();
    let observation = vec![
        vec![1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    FinitePomdp::from_nested(&transition, &observation, vec![r, 1.0 - r, 0.0, 0.0])
}

/// The pair `(E_p, E_q)` differing only in `μ0`.
pub fn build_prop1_pair(p: f64, q: f64) -> Result<(FinitePomdp, FinitePomdp)> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.5 && v < 1.0) {
            return domain(format!("{name} must lie in (1/2, 1), got {v}"));
        }
    }
    if p == q {
        return domain("the construction needs p != q");
    }
    Ok((prop1_environment(p, 2)?, prop1_environment(q, 2)?))
}

/// Observation indices of [`cue_alias_environment`].
pub mod cue {
    pub const OBS_U: usize = 0;
    pub const OBS_ZERO: usize = 1;
    pub const OBS_ONE: usize = 2;
    pub const OBS_CUE0: usize = 3;
    pub const OBS_CUE1: usize = 4;
}

/// Two cue states `c0, c1` (observed as `cue0`, `cue1`, each w.p. 1/2) lead to
/// the hidden pair `x0, x1` (both observed as `u`) with probabilities
/// `(bias, 1−bias)` and `(1−bias, bias)`; `x_i` then moves to absorbing `y_i`
/// observed as `i`. The histories `(cue0, a, u)` and `(cue1, a, u)` share their
/// last observation but predict `0^k` with probabilities `bias` and `1−bias`.
///
/// Latent order: `c0, c1, x0, x1, y0, y1`.
pub fn cue_alias_environment(bias: f64) -> Result<FinitePomdp> {
    if !(0.0..=1.0).contains(&bias) {
        return domain(format!("bias must be a probability, got {bias}"));
    }
    let n_actions = 2;
    let rows: [[f64; 6]; 6] = [
        [0.0, 0.0, bias, 1.0 - bias, 0.0, 0.0],
        [0.0, 0.0, 1.0 - bias, bias, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ];
    let transition: Vec<Vec<Vec<f64>>> = rows.iter().map(|r| vec![r.to_vec(); n_actions]).collect();
    let emit = [cue::OBS_CUE0, cue::OBS_CUE1, cue::OBS_U, cue::OBS_U, cue::OBS_ZERO, cue::OBS_ONE];
    let observation: Vec<Vec<f64>> = emit
        .iter()
        .map(|&o| {
            let mut row = vec![0.0; 5];
            row[o] = 1.0;
            row
        })
        .collect();
    FinitePomdp::from_nested(&transition, &observation, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0])
}

/// Two latent states observed perfectly, moving uniformly at random under
/// every action. Every one-step singleton test has probability exactly 1/2.
pub fn fair_coin_environment() -> Result<FinitePomdp> {
    let transition = vec![vec![vec![0.5, 0.5]; 2]; 2];
    let observation = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    FinitePomdp::from_nested(&transition, &observation, vec![0.5, 0.5])
}

/// Two latent states, two actions, two observations, all entries dyadic so
/// every depth-≤2 test probability at the one-step histories is a multiple
/// of 1/256. `Z = [[3/4, 1/4], [1/4, 3/4]]`, action 0 keeps the state, action
/// 1 moves `x0` to either state w.p. 1/2 and keeps `x1`.
pub fn dyadic_psr_environment() -> Result<FinitePomdp> {
    let transition = vec![
        vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
    ];
    let observation = vec![vec![0.75, 0.25], vec![0.25, 0.75]];
    FinitePomdp::from_nested(&transition, &observation, vec![0.5, 0.5])
}
