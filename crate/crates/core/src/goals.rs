//! Diagnostic task objects: composite counting goals over an MDP, predictive
//! tests over a POMDP, and the fair and threshold bets placed on them.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environments::{filter_belief, Belief, FiniteMdp, FinitePomdp, History, DEFAULT_DEPTH_CAP};
use crate::error::{domain, LabError, Result};
use crate::numerics::{Binomial, MARGIN_TOL};

/// Either-or commitment about how many of `n` attempted `(s, a) → s_next`
/// transitions succeed: branch 1 is `X ≤ k`, branch 2 is `X > k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompositeGoal {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub n: u64,
    pub k: u64,
}

/// Optimal success probabilities of the two branches of a binary goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalValue {
    pub u_branch1: f64,
    pub u_branch2: f64,
    pub v_star: f64,
    pub margin: f64,
}

impl GoalValue {
    /// True when branch 1 (report L) is optimal; ties go to branch 1.
    pub fn branch1_optimal(&self) -> bool {
        self.u_branch1 >= self.u_branch2
    }
}

fn check_goal(mdp: &FiniteMdp, g: &CompositeGoal) -> Result<()> {
    if g.s >= mdp.n_states() || g.s_next >= mdp.n_states() || g.a >= mdp.n_actions() {
        return domain(format!("goal {g:?} indexes outside the MDP"));
    }
    if g.n == 0 || g.k > g.n {
        return domain(format!("goal needs n >= 1 and 0 <= k <= n, got n={}, k={}", g.n, g.k));
    }
    Ok(())
}

fn composite_from_cdf(f: f64) -> GoalValue {
    GoalValue {
        u_branch1: f,
        u_branch2: 1.0 - f,
        v_star: f.max(1.0 - f),
        margin: (f - 0.5).abs(),
    }
}

/// Branch values `(F(k), 1 − F(k))` with `F` the `Bin(n, P[s][a][s_next])` CDF.
pub fn composite_goal_value(mdp: &FiniteMdp, g: &CompositeGoal) -> Result<GoalValue> {
    check_goal(mdp, g)?;
    if !mdp.is_communicating() {
        return Err(LabError::Precondition(
            "composite goals need a communicating MDP; attempt times may be infinite".into(),
        ));
    }
    let bin = Binomial::new(g.n, mdp.prob(g.s, g.a, g.s_next))?;
    Ok(composite_from_cdf(bin.cdf(g.k)?))
}

/// Values for every threshold `k = 0..=n` of one `(s, a, s_next)` cell.
pub fn composite_cell_values(mdp: &FiniteMdp, s: usize, a: usize, s_next: usize, n: u64) -> Result<Vec<GoalValue>> {
    check_goal(
        mdp,
        &CompositeGoal {
            s,
            a,
            s_next,
            n,
            k: 0,
        },
    )?;
    if !mdp.is_communicating() {
        return Err(LabError::Precondition(
            "composite goals need a communicating MDP; attempt times may be infinite".into(),
        ));
    }
    let bin = Binomial::new(n, mdp.prob(s, a, s_next))?;
    Ok(bin.cdf_table().iter().map(|&f| composite_from_cdf(f)).collect())
}

/// An action sequence `α` and an explicit event `W ⊆ O^|α|`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Test {
    pub actions: Vec<usize>,
    pub event: BTreeSet<Vec<usize>>,
}

impl Test {
    pub fn new(actions: Vec<usize>, event: BTreeSet<Vec<usize>>) -> Result<Self> {
        if actions.is_empty() {
            return domain("a test needs at least one action");
        }
        if event.is_empty() {
            return domain("a test needs a nonempty event");
        }
        if let Some(bad) = event.iter().find(|w| w.len() != actions.len()) {
            return domain(format!("event member {bad:?} does not match depth {}", actions.len()));
        }
        Ok(Self { actions, event })
    }

    /// Test whose event is a single observation sequence.
    pub fn singleton(actions: Vec<usize>, observations: Vec<usize>) -> Self {
        assert_eq!(actions.len(), observations.len(), "sequence lengths must agree");
        Self {
            actions,
            event: BTreeSet::from([observations]),
        }
    }

    pub fn depth(&self) -> usize {
        self.actions.len()
    }

    /// True when `W = O^k`.
    pub fn is_full(&self, n_obs: usize) -> bool {
        self.event.len() == n_obs.pow(self.depth() as u32)
    }

    /// `(α, O^k \ W)`; `None` when `W` is already full.
    pub fn complement(&self, n_obs: usize) -> Option<Self> {
        let event: BTreeSet<Vec<usize>> = all_sequences(n_obs, self.depth())
            .into_iter()
            .filter(|w| !self.event.contains(w))
            .collect();
        (!event.is_empty()).then(|| Self {
            actions: self.actions.clone(),
            event,
        })
    }

    fn check(&self, pomdp: &FinitePomdp) -> Result<()> {
        if self.actions.iter().any(|&a| a >= pomdp.n_actions())
            || self.event.iter().flatten().any(|&o| o >= pomdp.n_obs())
        {
            return domain("test uses symbols outside the environment");
        }
        Ok(())
    }
}

impl std::fmt::Display for Test {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let acts: Vec<String> = self.actions.iter().map(|a| a.to_string()).collect();
        let evs: Vec<String> = self
            .event
            .iter()
            .map(|w| w.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(""))
            .collect();
        write!(f, "a{}|{{{}}}", acts.join(""), evs.join(","))
    }
}

/// Every sequence in `{0..n}^len`, lexicographic.
pub fn all_sequences(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |x| {
                    let mut next = prefix.clone();
                    next.push(x);
                    next
                })
            })
            .collect();
    }
    out
}

/// `Pr(O_{t+1..t+k} ∈ W | belief, α)`.
pub fn test_probability_from_belief(pomdp: &FinitePomdp, belief: &Belief, t: &Test) -> Result<f64> {
    t.check(pomdp)?;
    let mut total = 0.0;
    for w in &t.event {
        let mut alpha = belief.weights.clone();
        for (&a, &o) in t.actions.iter().zip(w) {
            alpha = pomdp.step(&alpha, a, o);
        }
        total += alpha.iter().sum::<f64>();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `p_T(h)`: success probability of test `t` after history `h`.
pub fn test_probability(pomdp: &FinitePomdp, h: &History, t: &Test) -> Result<f64> {
    if t.depth() > DEFAULT_DEPTH_CAP {
        return Err(LabError::CapExceeded {
            what: "test depth",
            requested: t.depth(),
            cap: DEFAULT_DEPTH_CAP,
        });
    }
    test_probability_from_belief(pomdp, &filter_belief(pomdp, h)?, t)
}

/// Table `p[h][t]` over every history and test, computed in parallel with
/// deterministic ordering.
pub fn probability_table(pomdp: &FinitePomdp, histories: &[History], tests: &[Test]) -> Result<Vec<Vec<f64>>> {
    histories
        .par_iter()
        .map(|h| {
            let belief = filter_belief(pomdp, h)?;
            tests.iter().map(|t| test_probability_from_belief(pomdp, &belief, t)).collect()
        })
        .collect()
}

/// Fair bet on a test: report L wins with probability `p_T`, R with `1 − p_T`.
pub fn fair_goal_value(p_t: f64) -> GoalValue {
    GoalValue {
        u_branch1: p_t,
        u_branch2: 1.0 - p_t,
        v_star: 0.5 + (p_t - 0.5).abs(),
        margin: (p_t - 0.5).abs(),
    }
}

/// Threshold bet: report L wins with `p_T`, report R with the reference
/// lottery `λ`.
pub fn threshold_goal_value(p_t: f64, lambda: f64) -> GoalValue {
    GoalValue {
        u_branch1: p_t,
        u_branch2: lambda,
        v_star: p_t.max(lambda),
        margin: (p_t - lambda).abs() / 2.0,
    }
}

/// `λ_k = (k − 1/2)/K` for `k = 1..=K`.
pub fn threshold_grid(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return domain("the threshold grid needs K >= 1");
    }
    Ok((1..=k).map(|i| (i as f64 - 0.5) / k as f64).collect())
}

/// `p ≥ 1/2 + γ`, up to [`MARGIN_TOL`].
pub fn confidently_high(p: f64, gamma: f64) -> bool {
    p >= 0.5 + gamma - MARGIN_TOL
}

/// `p ≤ 1/2 − γ`, up to [`MARGIN_TOL`].
pub fn confidently_low(p: f64, gamma: f64) -> bool {
    p <= 0.5 - gamma + MARGIN_TOL
}

/// `m ≥ γ`, up to [`MARGIN_TOL`].
pub fn margin_at_least(m: f64, gamma: f64) -> bool {
    m >= gamma - MARGIN_TOL
}

/// Indices `T` with `p_T(h) ≥ 1/2 + γ` and `p_T(h') ≤ 1/2 − γ`.
pub fn witness_indices(p_h: &[f64], p_h_prime: &[f64], gamma: f64) -> Vec<usize> {
    p_h.iter()
        .zip(p_h_prime)
        .enumerate()
        .filter(|(_, (&x, &y))| confidently_high(x, gamma) && confidently_low(y, gamma))
        .map(|(i, _)| i)
        .collect()
}

/// Tests of `universe` whose probabilities are high at `h` and low at `h_prime`.
pub fn witness_tests(
    pomdp: &FinitePomdp,
    h: &History,
    h_prime: &History,
    gamma: f64,
    universe: &[Test],
) -> Result<Vec<Test>> {
    if h.last_observation() != h_prime.last_observation() {
        return domain("witness sets are defined for histories sharing their last observation");
    }
    let table = probability_table(pomdp, &[h.clone(), h_prime.clone()], universe)?;
    Ok(witness_indices(&table[0], &table[1], gamma)
        .into_iter()
        .map(|i| universe[i].clone())
        .collect())
}

/// Event families used to build finite test universes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFamily {
    /// `W = {w}` for a single sequence.
    Singletons,
    /// `W` = all sequences with a given proper prefix.
    PrefixCylinders,
    /// `W = O^k \ {w}`.
    Complements,
}

/// All tests of depth `1..=depth` in the requested families, deduplicated and
/// sorted; events equal to `O^k` are dropped.
pub fn test_universe(n_actions: usize, n_obs: usize, depth: usize, families: &[TestFamily]) -> Result<Vec<Test>> {
    if depth > DEFAULT_DEPTH_CAP {
        return Err(LabError::CapExceeded {
            what: "test depth",
            requested: depth,
            cap: DEFAULT_DEPTH_CAP,
        });
    }
    let mut out = BTreeSet::new();
    for k in 1..=depth {
        let seqs = all_sequences(n_obs, k);
        for alpha in all_sequences(n_actions, k) {
            for family in families {
                match family {
                    TestFamily::Singletons => {
                        for w in &seqs {
                            out.insert(Test::singleton(alpha.clone(), w.clone()));
                        }
                    }
                    TestFamily::Complements => {
                        for w in &seqs {
                            if let Some(c) = Test::singleton(alpha.clone(), w.clone()).complement(n_obs) {
                                out.insert(c);
                            }
                        }
                    }
                    TestFamily::PrefixCylinders => {
                        for j in 1..k {
                            for prefix in all_sequences(n_obs, j) {
                                let event = seqs.iter().filter(|w| w.starts_with(&prefix)).cloned().collect();
                                out.insert(Test {
                                    actions: alpha.clone(),
                                    event,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out.into_iter().filter(|t| !t.is_full(n_obs)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{enumerate_histories, prop1_environment, pomdp::prop1};
    use crate::numerics::margin_constants;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_state(p: f64) -> FiniteMdp {
        FiniteMdp::from_nested(
            &[
                vec![vec![1.0 - p, p], vec![0.5, 0.5]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn composite_examples() {
        let mdp = two_state(0.5);
        let g = CompositeGoal {
            s: 0,
            a: 0,
            s_next: 1,
            n: 4,
            k: 2,
        };
        let v = composite_goal_value(&mdp, &g).unwrap();
        assert!((v.u_branch1 - 0.6875).abs() < 1e-15);
        assert!((v.u_branch2 - 0.3125).abs() < 1e-15);
        assert!((v.v_star - 0.6875).abs() < 1e-15);
        assert!((v.margin - 0.1875).abs() < 1e-15);
        let full = composite_goal_value(&mdp, &CompositeGoal { k: 4, ..g }).unwrap();
        assert_eq!(full.u_branch1, 1.0);
        let never = composite_goal_value(&two_state(0.0), &CompositeGoal { k: 1, ..g }).unwrap();
        assert_eq!((never.u_branch1, never.margin), (1.0, 0.5));
    }

    #[test]
    fn composite_requires_communicating() {
        let stuck = FiniteMdp::from_nested(
            &[vec![vec![1.0, 0.0], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let g = CompositeGoal {
            s: 0,
            a: 0,
            s_next: 0,
            n: 3,
            k: 1,
        };
        assert!(matches!(composite_goal_value(&stuck, &g), Err(LabError::Precondition(_))));
    }

    #[test]
    fn chebyshev_margin_step() {
        for &gamma in &[0.1, 0.2, 0.3, 0.4] {
            let t = margin_constants(gamma).unwrap().t_gamma.unwrap();
            for n in 1..=100u64 {
                for i in 0..=20 {
                    let p = i as f64 * 0.05;
                    let bin = Binomial::new(n, p).unwrap();
                    let mu = n as f64 * p;
                    let sigma = (mu * (1.0 - p)).sqrt();
                    for k in 0..=n {
                        if (k as f64 - mu).abs() >= t * sigma {
                            let m = (bin.cdf(k).unwrap() - 0.5).abs();
                            assert!(margin_at_least(m, gamma), "n={n} p={p} k={k} m={m}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fair_and_threshold_values() {
        let v = fair_goal_value(0.8);
        assert!((v.v_star - 0.8).abs() < 1e-15 && (v.margin - 0.3).abs() < 1e-15);
        assert_eq!(fair_goal_value(0.5).margin, 0.0);
        assert_eq!((fair_goal_value(0.0).v_star, fair_goal_value(0.0).margin), (1.0, 0.5));
        assert_eq!(threshold_goal_value(0.62, 0.55).v_star, 0.62);
        assert_eq!(threshold_goal_value(0.62, 0.65).v_star, 0.65);
        assert!(threshold_goal_value(0.4, 0.4).branch1_optimal());
    }

    #[test]
    fn grid() {
        assert_eq!(threshold_grid(1).unwrap(), vec![0.5]);
        assert_eq!(threshold_grid(2).unwrap(), vec![0.25, 0.75]);
        let g = threshold_grid(10).unwrap();
        assert_eq!(g.len(), 10);
        for i in 0..10 {
            assert!((g[i] + g[9 - i] - 1.0).abs() < 1e-15);
            assert!((g[i] - (i as f64 / 10.0 + 0.05)).abs() < 1e-15);
        }
        assert!(threshold_grid(0).is_err());
    }

    #[test]
    fn prop1_closed_form() {
        let env = prop1_environment(0.7, 2).unwrap();
        let h = History::initial(prop1::OBS_U);
        for k in 1..=3 {
            let zeros = vec![prop1::OBS_ZERO; k];
            let ones = vec![prop1::OBS_ONE; k];
            let p = test_probability(&env, &h, &Test::singleton(vec![0; k], zeros.clone())).unwrap();
            assert!((p - 0.7).abs() < 1e-15);
            let both = Test::new(vec![1; k], BTreeSet::from([zeros, ones])).unwrap();
            assert!((test_probability(&env, &h, &both).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn full_event_and_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let env = FinitePomdp::random(3, 2, 3, &mut rng).unwrap();
        let h = History::new(vec![0, 2], vec![1]).unwrap();
        let full = Test::new(vec![0, 1], all_sequences(3, 2).into_iter().collect()).unwrap();
        assert!((test_probability(&env, &h, &full).unwrap() - 1.0).abs() < 1e-12);
        for t in test_universe(2, 3, 2, &[TestFamily::Singletons]).unwrap() {
            let p = test_probability(&env, &h, &t).unwrap();
            let c = test_probability(&env, &h, &t.complement(3).unwrap()).unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert!((p + c - 1.0).abs() < 1e-12);
        }
    }

    /// Joint probability of `(h, future)` by summing over every latent path,
    /// divided by the probability of `h`.
    fn joint_oracle(env: &FinitePomdp, h: &History, t: &Test) -> f64 {
        let obs: Vec<usize> = h.observations().to_vec();
        let acts: Vec<usize> = h.actions().to_vec();
        let path_prob = |obs: &[usize], acts: &[usize]| -> f64 {
            let n = env.n_latent();
            let len = obs.len();
            let mut total = 0.0;
            for code in 0..n.pow(len as u32) {
                let mut c = code;
                let mut xs = Vec::with_capacity(len);
                for _ in 0..len {
                    xs.push(c % n);
                    c /= n;
                }
                let mut w = env.initial()[xs[0]] * env.observe(xs[0], obs[0]);
                for i in 1..len {
                    w *= env.transition(xs[i - 1], acts[i - 1], xs[i]) * env.observe(xs[i], obs[i]);
                }
                total += w;
            }
            total
        };
        let base = path_prob(&obs, &acts);
        let mut num = 0.0;
        for w in &t.event {
            let mut o2 = obs.clone();
            o2.extend(w);
            let mut a2 = acts.clone();
            a2.extend(&t.actions);
            num += path_prob(&o2, &a2);
        }
        num / base
    }

    #[test]
    fn test_probability_matches_joint_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..6 {
            let nx = rng.gen_range(1..=3);
            let no = rng.gen_range(2..=3);
            let env = FinitePomdp::random(nx, 2, no, &mut rng).unwrap();
            let universe = test_universe(2, no, 2, &[TestFamily::Singletons, TestFamily::PrefixCylinders]).unwrap();
            for (h, _) in enumerate_histories(&env, 1).unwrap() {
                for t in &universe {
                    let p = test_probability(&env, &h, t).unwrap();
                    assert!((p - joint_oracle(&env, &h, t)).abs() <= 1e-12);
                }
            }
            let deep = Test::singleton(vec![1, 0, 1], vec![0, 1, 0]);
            let h = enumerate_histories(&env, 0).unwrap()[0].0.clone();
            assert!((test_probability(&env, &h, &deep).unwrap() - joint_oracle(&env, &h, &deep)).abs() <= 1e-12);
        }
    }

    #[test]
    fn universe_shapes() {
        let singles = test_universe(2, 2, 1, &[TestFamily::Singletons]).unwrap();
        assert_eq!(singles.len(), 4);
        let cyl = test_universe(1, 2, 2, &[TestFamily::PrefixCylinders]).unwrap();
        assert_eq!(cyl.len(), 2);
        assert!(cyl.iter().all(|t| t.event.len() == 2));
        let both = test_universe(1, 2, 1, &[TestFamily::Singletons, TestFamily::Complements]).unwrap();
        assert_eq!(both.len(), 2);
        assert!(test_universe(2, 2, 5, &[TestFamily::Singletons]).is_err());
    }

    #[test]
    fn witness_examples() {
        use crate::environments::{cue_alias_environment, pomdp::cue};
        let env = cue_alias_environment(0.8).unwrap();
        let h = History::new(vec![cue::OBS_CUE0, cue::OBS_U], vec![0]).unwrap();
        let h2 = History::new(vec![cue::OBS_CUE1, cue::OBS_U], vec![0]).unwrap();
        let t = Test::singleton(vec![0], vec![cue::OBS_ZERO]);
        let universe = vec![t.clone()];
        assert_eq!(witness_tests(&env, &h, &h2, 0.3, &universe).unwrap(), vec![t.clone()]);
        assert!(witness_tests(&env, &h2, &h, 0.3, &universe).unwrap().is_empty());
        assert!(witness_tests(&env, &h, &h, 0.3, &universe).unwrap().is_empty());
        assert!(witness_tests(&env, &h, &h2, 0.45, &universe).unwrap().is_empty());
    }
}
