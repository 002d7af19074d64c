//! Goal-conditioned branch policies with controllable regret, including
//! memory-constrained policies that see a history only through `M(h)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::EvaluationDistribution;
use crate::error::{domain, LabError, Result};
use crate::goals::{fair_goal_value, threshold_goal_value, threshold_grid, CompositeGoal, GoalValue};
use crate::numerics::bet_regret;

/// Identifies the goal a decision is about. Test indices refer to the test
/// list of the evaluation in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GoalKey {
    Composite(CompositeGoal),
    Fair { test: usize },
    Threshold { test: usize, k: usize },
}

/// Everything a policy may condition on for one binary decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionCell {
    pub value: GoalValue,
    /// Index into the evaluation's history list; `None` in fully observed settings.
    pub history: Option<usize>,
    pub goal: GoalKey,
}

/// `M(h)` as a table over the enumerated history list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryMap {
    ids: Vec<usize>,
}

impl MemoryMap {
    pub fn from_labels(ids: Vec<usize>) -> Self {
        Self { ids }
    }

    /// No aliasing.
    pub fn identity(n_histories: usize) -> Self {
        Self {
            ids: (0..n_histories).collect(),
        }
    }

    /// Every history aliased.
    pub fn constant(n_histories: usize) -> Self {
        Self {
            ids: vec![0; n_histories],
        }
    }

    /// Ids drawn uniformly from `0..alphabet`.
    pub fn random<R: Rng + ?Sized>(n_histories: usize, alphabet: usize, rng: &mut R) -> Result<Self> {
        if alphabet == 0 {
            return domain("a memory alphabet needs at least one symbol");
        }
        Ok(Self {
            ids: (0..n_histories).map(|_| rng.gen_range(0..alphabet)).collect(),
        })
    }

    pub fn get(&self, h: usize) -> Option<usize> {
        self.ids.get(h).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.ids
    }

    pub fn aliased(&self, h: usize, h_prime: usize) -> bool {
        matches!((self.get(h), self.get(h_prime)), (Some(x), Some(y)) if x == y)
    }
}

/// How an M-based policy picks one `q` per (memory id, goal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolver {
    /// Minimizes the weighted regret of the histories sharing the memory id.
    /// Regret is linear in `q`, so an endpoint is optimal; ties pick `q = 1`.
    CellOptimal,
    /// `q = 1` iff branch 1 is optimal for at least half the weight.
    MajorityVote,
    Fixed { q: f64 },
}

/// Resolved `q` table of an M-based policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryPolicy {
    pub memory: MemoryMap,
    table: BTreeMap<(usize, GoalKey), f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchPolicy {
    /// Branch 1 iff its value is at least branch 2's.
    Optimal,
    /// `q = (1 − ε)·q_base + ε·(1 − q_base)`.
    Noisy { epsilon: f64, base: Box<BranchPolicy> },
    Constant { q: f64 },
    MemoryBased(MemoryPolicy),
}

pub fn optimal_policy() -> BranchPolicy {
    BranchPolicy::Optimal
}

pub fn noisy_policy(epsilon: f64, base: BranchPolicy) -> Result<BranchPolicy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return domain(format!("epsilon must be a probability, got {epsilon}"));
    }
    Ok(BranchPolicy::Noisy {
        epsilon,
        base: Box::new(base),
    })
}

pub fn constant_policy(q: f64) -> Result<BranchPolicy> {
    if !(0.0..=1.0).contains(&q) {
        return domain(format!("q must be a probability, got {q}"));
    }
    Ok(BranchPolicy::Constant { q })
}

impl BranchPolicy {
    /// Probability of choosing branch 1 (report L) on `cell`.
    pub fn q(&self, cell: &DecisionCell) -> Result<f64> {
        match self {
            BranchPolicy::Optimal => Ok(if cell.value.branch1_optimal() { 1.0 } else { 0.0 }),
            BranchPolicy::Noisy { epsilon, base } => {
                let q = base.q(cell)?;
                Ok((1.0 - epsilon) * q + epsilon * (1.0 - q))
            }
            BranchPolicy::Constant { q } => Ok(*q),
            BranchPolicy::MemoryBased(mp) => {
                let h = cell
                    .history
                    .ok_or_else(|| LabError::Config("a memory-based policy needs a history index".into()))?;
                let id = mp
                    .memory
                    .get(h)
                    .ok_or_else(|| LabError::Config(format!("history {h} has no memory id")))?;
                mp.table
                    .get(&(id, cell.goal))
                    .copied()
                    .ok_or_else(|| LabError::Config(format!("memory id {id} is unresolved for goal {:?}", cell.goal)))
            }
        }
    }

    /// True when the policy can be queried without a history index.
    pub fn history_free(&self) -> bool {
        match self {
            BranchPolicy::MemoryBased(_) => false,
            BranchPolicy::Noisy { base, .. } => base.history_free(),
            _ => true,
        }
    }
}

/// Bets over a history list and a weighted goal list, with the goal values
/// per `(history, goal)` cell and an optional pair distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BetTable {
    pub history_weights: Vec<f64>,
    pub goals: Vec<(GoalKey, f64)>,
    pub values: Vec<Vec<GoalValue>>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl BetTable {
    /// Fair bets `g_T` with `probs[h][t] = p_T(h)`.
    pub fn fair(eval: &EvaluationDistribution, probs: &[Vec<f64>]) -> Self {
        let goals = eval
            .tests
            .iter()
            .enumerate()
            .map(|(t, (_, w))| (GoalKey::Fair { test: t }, *w))
            .collect();
        let values = probs.iter().map(|row| row.iter().map(|&p| fair_goal_value(p)).collect()).collect();
        Self {
            history_weights: eval.history_weights(),
            goals,
            values,
            pairs: eval.pairs.clone(),
        }
    }

    /// Threshold bets `g_{T, λ_k}` on the `K`-point grid, each with weight `w_T / K`.
    pub fn threshold(eval: &EvaluationDistribution, probs: &[Vec<f64>], k: usize) -> Result<Self> {
        let grid = threshold_grid(k)?;
        let mut goals = Vec::with_capacity(eval.tests.len() * k);
        for (t, (_, w)) in eval.tests.iter().enumerate() {
            for i in 0..k {
                goals.push((GoalKey::Threshold { test: t, k: i }, w / k as f64));
            }
        }
        let values = probs
            .iter()
            .map(|row| {
                row.iter()
                    .flat_map(|&p| grid.iter().map(move |&l| threshold_goal_value(p, l)))
                    .collect()
            })
            .collect();
        Ok(Self {
            history_weights: eval.history_weights(),
            goals,
            values,
            pairs: eval.pairs.clone(),
        })
    }

    pub fn cell(&self, h: usize, g: usize) -> DecisionCell {
        DecisionCell {
            value: self.values[h][g],
            history: Some(h),
            goal: self.goals[g].0,
        }
    }

    /// Weight of each history under the pair distribution (half a pair's
    /// weight per side), or the history weights when there are no pairs.
    pub fn decision_weights(&self) -> Vec<f64> {
        if self.pairs.is_empty() {
            return self.history_weights.clone();
        }
        let mut w = vec![0.0; self.history_weights.len()];
        for &(i, j, p) in &self.pairs {
            w[i] += p / 2.0;
            w[j] += p / 2.0;
        }
        w
    }
}

fn regret_at(value: &GoalValue, q: f64) -> Result<f64> {
    Ok(bet_regret(value.u_branch1, value.u_branch2, q)?.regret)
}

/// Builds the policy that answers every history through `memory`, one `q`
/// per (memory id, goal) chosen by `resolver` on `table`.
pub fn m_based_policy(memory: MemoryMap, resolver: Resolver, table: &BetTable) -> Result<BranchPolicy> {
    if memory.len() != table.values.len() {
        return Err(LabError::Config(format!(
            "memory covers {} histories but the evaluation has {}",
            memory.len(),
            table.values.len()
        )));
    }
    if let Resolver::Fixed { q } = resolver {
        if !(0.0..=1.0).contains(&q) {
            return domain(format!("fixed q must be a probability, got {q}"));
        }
    }
    let weights = table.decision_weights();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for h in 0..memory.len() {
        groups.entry(memory.labels()[h]).or_default().push(h);
    }
    let mut resolved = BTreeMap::new();
    for (&id, members) in &groups {
        for (g, (key, _)) in table.goals.iter().enumerate() {
            let q = match resolver {
                Resolver::Fixed { q } => q,
                Resolver::MajorityVote => {
                    let (mut yes, mut total) = (0.0, 0.0);
                    for &h in members {
                        total += weights[h];
                        if table.values[h][g].branch1_optimal() {
                            yes += weights[h];
                        }
                    }
                    if yes * 2.0 >= total {
                        1.0
                    } else {
                        0.0
                    }
                }
                Resolver::CellOptimal => {
                    let (mut at0, mut at1) = (0.0, 0.0);
                    for &h in members {
                        at0 += weights[h] * regret_at(&table.values[h][g], 0.0)?;
                        at1 += weights[h] * regret_at(&table.values[h][g], 1.0)?;
                    }
                    if at1 <= at0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            resolved.insert((id, *key), q);
        }
    }
    Ok(BranchPolicy::MemoryBased(MemoryPolicy {
        memory,
        table: resolved,
    }))
}

/// Per-cell regrets with their weighted averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretProfile {
    /// `cells[h][g]`: normalized regret.
    pub cells: Vec<Vec<f64>>,
    /// `wrong_mass[h][g]`: probability on the suboptimal branch.
    pub wrong_mass: Vec<Vec<f64>>,
    /// `Σ_h Σ_g w_h w_g δ(h, g)`.
    pub average: f64,
    /// `Σ_(h,h') w · ½(Σ_g w_g δ(h, g) + Σ_g w_g δ(h', g))`, when pairs exist.
    pub pair_average: Option<f64>,
}

impl RegretProfile {
    /// Goal-weighted regret of each history.
    pub fn per_history(&self, goal_weights: &[f64]) -> Vec<f64> {
        self.cells
            .iter()
            .map(|row| row.iter().zip(goal_weights).map(|(d, w)| d * w).sum())
            .collect()
    }
}

pub fn regret_profile(policy: &BranchPolicy, table: &BetTable) -> Result<RegretProfile> {
    let mut cells = Vec::with_capacity(table.values.len());
    let mut wrong = Vec::with_capacity(table.values.len());
    for h in 0..table.values.len() {
        let mut row = Vec::with_capacity(table.goals.len());
        let mut wrow = Vec::with_capacity(table.goals.len());
        for g in 0..table.goals.len() {
            let cell = table.cell(h, g);
            let v = cell.value;
            let out = bet_regret(v.u_branch1, v.u_branch2, policy.q(&cell)?)?;
            row.push(out.regret);
            wrow.push(out.wrong_mass);
        }
        cells.push(row);
        wrong.push(wrow);
    }
    let goal_weights: Vec<f64> = table.goals.iter().map(|g| g.1).collect();
    let profile = RegretProfile {
        cells,
        wrong_mass: wrong,
        average: 0.0,
        pair_average: None,
    };
    let per_history = profile.per_history(&goal_weights);
    let average = per_history.iter().zip(&table.history_weights).map(|(r, w)| r * w).sum();
    let pair_average = (!table.pairs.is_empty()).then(|| {
        table
            .pairs
            .iter()
            .map(|&(i, j, w)| w * 0.5 * (per_history[i] + per_history[j]))
            .sum()
    });
    Ok(RegretProfile {
        average,
        pair_average,
        ..profile
    })
}
