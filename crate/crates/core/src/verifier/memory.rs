//! Memory-necessity checks: aliasing mass against pair-averaged regret, its
//! per-block and regime-mismatch forms, and partition equality of minimal
//! memories.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BoundReport, ReportInputs};
use crate::agents::{m_based_policy, regret_profile, BetTable, BranchPolicy, MemoryMap, Resolver};
use crate::environments::{EvaluationDistribution, FinitePomdp, History};
use crate::error::{domain, LabError, Result};
use crate::goals::{confidently_high, confidently_low, probability_table, Test};
use crate::numerics::margin_constants;

/// One entry of the γ-coarsened decision profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// `p ≥ 1/2 + γ`.
    L,
    /// `p ≤ 1/2 − γ`.
    R,
    Undecided,
}

/// `ℓ(h)` for every row of `probs`.
pub fn decision_profile(probs: &[Vec<f64>], gamma: f64) -> Vec<Vec<Label>> {
    probs
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    if confidently_high(p, gamma) {
                        Label::L
                    } else if confidently_low(p, gamma) {
                        Label::R
                    } else {
                        Label::Undecided
                    }
                })
                .collect()
        })
        .collect()
}

fn is_witness(probs: &[Vec<f64>], h: usize, h_prime: usize, t: usize, gamma: f64) -> bool {
    confidently_high(probs[h][t], gamma) && confidently_low(probs[h_prime][t], gamma)
}

/// `Pr((h, h') ∈ Alias_M ∧ T ∈ S_γ(h, h'))` with `T` drawn from `tests`
/// (index, weight) and pairs kept by `keep`.
fn alias_mass_over(
    memory: &MemoryMap,
    pairs: &[(usize, usize, f64)],
    tests: &[(usize, f64)],
    probs: &[Vec<f64>],
    gamma: f64,
    keep: impl Fn(usize, usize) -> bool,
) -> f64 {
    let mut total = 0.0;
    for &(h, hp, w) in pairs {
        if w == 0.0 || !memory.aliased(h, hp) || !keep(h, hp) {
            continue;
        }
        let inner: f64 = tests
            .iter()
            .filter(|(t, _)| is_witness(probs, h, hp, *t, gamma))
            .map(|(_, wt)| wt)
            .sum();
        total += w * inner;
    }
    total
}

fn indexed_tests(eval: &EvaluationDistribution) -> Vec<(usize, f64)> {
    eval.tests.iter().enumerate().map(|(i, (_, w))| (i, *w)).collect()
}

fn check_shapes(eval: &EvaluationDistribution, probs: &[Vec<f64>], memory: &MemoryMap) -> Result<()> {
    if eval.pairs.is_empty() {
        return Err(LabError::Config("the evaluation has no history pairs".into()));
    }
    if probs.len() != eval.histories.len() || probs.iter().any(|r| r.len() != eval.tests.len()) {
        return Err(LabError::Shape("probability table does not match the evaluation".into()));
    }
    if memory.len() != eval.histories.len() {
        return Err(LabError::Config(format!(
            "memory covers {} histories but the evaluation has {}",
            memory.len(),
            eval.histories.len()
        )));
    }
    Ok(())
}

/// `q^Alias_γ(M)` with the maximal witness sets.
pub fn alias_mass(memory: &MemoryMap, eval: &EvaluationDistribution, probs: &[Vec<f64>], gamma: f64) -> Result<f64> {
    margin_constants(gamma)?;
    check_shapes(eval, probs, memory)?;
    Ok(alias_mass_over(memory, &eval.pairs, &indexed_tests(eval), probs, gamma, |_, _| true))
}

/// True when `policy` answers every pair aliased by `memory` identically.
fn factors_through(policy: &BranchPolicy, memory: &MemoryMap) -> bool {
    match policy {
        BranchPolicy::Constant { .. } => true,
        BranchPolicy::Optimal => false,
        BranchPolicy::Noisy { base, .. } => factors_through(base, memory),
        BranchPolicy::MemoryBased(mp) => {
            let n = memory.len();
            mp.memory.len() == n && (0..n).all(|h| (0..n).all(|hp| !memory.aliased(h, hp) || mp.memory.aliased(h, hp)))
        }
    }
}

struct PairRegret {
    pair_average: f64,
    per_history: Vec<f64>,
}

fn pair_regret(table: &BetTable, policy: &BranchPolicy) -> Result<PairRegret> {
    let profile = regret_profile(policy, table)?;
    let goal_weights: Vec<f64> = table.goals.iter().map(|g| g.1).collect();
    Ok(PairRegret {
        pair_average: profile.pair_average.unwrap_or(0.0),
        per_history: profile.per_history(&goal_weights),
    })
}

fn thm7_inputs(gamma: f64, delta_bar: f64) -> ReportInputs {
    ReportInputs {
        gamma: Some(gamma),
        delta_bar: Some(delta_bar),
        ..Default::default()
    }
}

/// `q^Alias_γ(M)·c(γ)/2 ≤ δ̄_P(π)` for a policy that factors through `memory`,
/// on a prepared probability table. Left side is the aliasing lower bound,
/// right side the measured pair-averaged regret.
pub fn verify_thm7_table(
    eval: &EvaluationDistribution,
    probs: &[Vec<f64>],
    memory: &MemoryMap,
    policy: &BranchPolicy,
    gamma: f64,
) -> Result<BoundReport> {
    let mc = margin_constants(gamma)?;
    let q_alias = alias_mass(memory, eval, probs, gamma)?;
    let table = BetTable::fair(eval, probs);
    let regret = pair_regret(&table, policy)?;
    let lhs = q_alias * mc.c_gamma / 2.0;
    let mut report = BoundReport::new("thm7", lhs, regret.pair_average, None, thm7_inputs(gamma, regret.pair_average))
        .with_detail("q_alias", q_alias)
        .with_detail("alias_mass_bound", 2.0 * regret.pair_average / mc.c_gamma);
    if q_alias == 0.0 {
        report.vacuous = true;
        report.note("no aliased pair has a witness test");
    }
    if !factors_through(policy, memory) {
        report.flag("policy does not factor through the memory map");
    }
    Ok(report)
}

fn fair_probs(pomdp: &FinitePomdp, eval: &EvaluationDistribution) -> Result<Vec<Vec<f64>>> {
    let histories: Vec<History> = eval.histories.iter().map(|h| h.0.clone()).collect();
    probability_table(pomdp, &histories, &eval.test_list())
}

/// Memory-necessity bound for the `resolver`-optimal policy through `memory`.
pub fn verify_thm7(
    pomdp: &FinitePomdp,
    memory: &MemoryMap,
    resolver: Resolver,
    eval: &EvaluationDistribution,
    gamma: f64,
) -> Result<BoundReport> {
    let probs = fair_probs(pomdp, eval)?;
    let table = BetTable::fair(eval, &probs);
    let policy = m_based_policy(memory.clone(), resolver, &table)?;
    verify_thm7_table(eval, &probs, memory, &policy, gamma)
}

/// Per-block aliasing bound `q^Alias_{γ,i}(M) ≤ 2δ̄_P/(p_i·c(γ))` for a
/// disjoint partition of the test list into `blocks` (test indices). Blocks
/// with zero weight are skipped.
pub fn verify_cor3(
    pomdp: &FinitePomdp,
    memory: &MemoryMap,
    resolver: Resolver,
    eval: &EvaluationDistribution,
    blocks: &[Vec<usize>],
    gamma: f64,
) -> Result<Vec<BoundReport>> {
    let mc = margin_constants(gamma)?;
    let mut seen = BTreeSet::new();
    for &t in blocks.iter().flatten() {
        if t >= eval.tests.len() {
            return Err(LabError::Shape(format!("block member {t} is not a test index")));
        }
        if !seen.insert(t) {
            return Err(LabError::Config(format!("test {t} appears in two blocks")));
        }
    }
    let probs = fair_probs(pomdp, eval)?;
    check_shapes(eval, &probs, memory)?;
    let table = BetTable::fair(eval, &probs);
    let policy = m_based_policy(memory.clone(), resolver, &table)?;
    let delta_p = pair_regret(&table, &policy)?.pair_average;
    let mut out = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let p_i: f64 = block.iter().map(|&t| eval.tests[t].1).sum();
        if p_i <= 0.0 {
            continue;
        }
        let conditional: Vec<(usize, f64)> = block.iter().map(|&t| (t, eval.tests[t].1 / p_i)).collect();
        let lhs = alias_mass_over(memory, &eval.pairs, &conditional, &probs, gamma, |_, _| true);
        let rhs = 2.0 * delta_p / (p_i * mc.c_gamma);
        let report = BoundReport::new(&format!("cor3_block{i}"), lhs, rhs, Some(1.0), thm7_inputs(gamma, delta_p))
            .with_detail("block_weight", p_i);
        out.push(report);
    }
    if out.is_empty() {
        return domain("every block has zero test weight");
    }
    Ok(out)
}

/// Marginal test distribution `Σ_i Λ(i)·D_i`; tests shared by several
/// components are merged.
pub fn mixture_tests(components: &[(f64, Vec<(Test, f64)>)]) -> Result<Vec<(Test, f64)>> {
    let total: f64 = components.iter().map(|c| c.0).sum();
    if components.iter().any(|c| c.0.is_nan() || c.0 < 0.0) || (total - 1.0).abs() > 1e-10 {
        return domain("regime weights must be a probability vector");
    }
    let mut merged: BTreeMap<Test, f64> = BTreeMap::new();
    for (lambda, tests) in components {
        let inner: f64 = tests.iter().map(|t| t.1).sum();
        if (inner - 1.0).abs() > 1e-10 {
            return domain(format!("component test weights sum to {inner}, not 1"));
        }
        for (t, w) in tests {
            *merged.entry(t.clone()).or_default() += lambda * w;
        }
    }
    Ok(merged.into_iter().filter(|(_, w)| *w > 0.0).collect())
}

/// Regime-mismatch bound: `Pr(M(h)=M(h′) ∧ I(h)≠I(h′) ∧ T∈S_γ(h,h′)) ≤
/// 2δ̄_P/c(γ)`, with witness sets restricted to regime-mismatched pairs.
/// `eval` must carry regime labels.
pub fn verify_cor4(
    pomdp: &FinitePomdp,
    memory: &MemoryMap,
    resolver: Resolver,
    eval: &EvaluationDistribution,
    gamma: f64,
) -> Result<BoundReport> {
    let mc = margin_constants(gamma)?;
    let regimes = eval
        .regimes
        .as_ref()
        .ok_or_else(|| LabError::Config("the regime-mismatch check needs regime labels".into()))?;
    let probs = fair_probs(pomdp, eval)?;
    check_shapes(eval, &probs, memory)?;
    let table = BetTable::fair(eval, &probs);
    let policy = m_based_policy(memory.clone(), resolver, &table)?;
    let delta_p = pair_regret(&table, &policy)?.pair_average;
    let mismatch: f64 = eval.pairs.iter().filter(|p| regimes[p.0] != regimes[p.1]).map(|p| p.2).sum();
    let alias_event = alias_mass_over(memory, &eval.pairs, &indexed_tests(eval), &probs, gamma, |h, hp| {
        regimes[h] != regimes[hp]
    });
    let rhs = 2.0 * delta_p / mc.c_gamma;
    let mut report = BoundReport::new("cor4", alias_event, rhs, Some(mismatch), thm7_inputs(gamma, delta_p))
        .with_detail("regime_mismatch_mass", mismatch);
    if mismatch == 0.0 {
        report.note("no pair mixes regimes");
    }
    Ok(report)
}

/// Maps between two memory alphabets on a support, or the histories where the
/// two partitions disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recoding {
    /// `M₁ = φ(M₂)`.
    pub phi: BTreeMap<usize, usize>,
    /// `M₂ = ψ(M₁)`.
    pub psi: BTreeMap<usize, usize>,
    /// History pairs of the support grouped by one memory and split by the other.
    pub conflicts: Vec<(usize, usize)>,
}

impl Recoding {
    pub fn is_bijection(&self) -> bool {
        self.conflicts.is_empty() && self.phi.iter().all(|(m2, m1)| self.psi.get(m1) == Some(m2))
    }
}

/// Builds `φ`, `ψ` on the histories in `support`.
pub fn certify_recoding(m1: &MemoryMap, m2: &MemoryMap, support: &[usize]) -> Result<Recoding> {
    let mut phi: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut psi: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut conflicts = Vec::new();
    for &h in support {
        let (a, b) = match (m1.get(h), m2.get(h)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(LabError::Shape(format!("history {h} has no memory id"))),
        };
        match phi.get(&b) {
            Some(&(a0, h0)) if a0 != a => conflicts.push((h0, h)),
            Some(_) => {}
            None => {
                phi.insert(b, (a, h));
            }
        }
        match psi.get(&a) {
            Some(&(b0, h0)) if b0 != b => conflicts.push((h0, h)),
            Some(_) => {}
            None => {
                psi.insert(a, (b, h));
            }
        }
    }
    conflicts.sort_unstable();
    conflicts.dedup();
    Ok(Recoding {
        phi: phi.into_iter().map(|(k, v)| (k, v.0)).collect(),
        psi: psi.into_iter().map(|(k, v)| (k, v.0)).collect(),
        conflicts,
    })
}

/// Class id of each history's decision profile, in order of first appearance.
fn profile_classes(labels: &[Vec<Label>]) -> Vec<usize> {
    let mut ids: BTreeMap<&[Label], usize> = BTreeMap::new();
    labels
        .iter()
        .map(|row| {
            let next = ids.len();
            *ids.entry(row.as_slice()).or_insert(next)
        })
        .collect()
}

/// Certifies that `m1` and `m2` induce the same partition on the pair
/// support, after checking minimality of both and completeness of the
/// evaluation. Left side: number of conflicting history pairs; right side 0.
pub fn verify_cor5_with(
    eval: &EvaluationDistribution,
    probs: &[Vec<f64>],
    gamma: f64,
    m1: &MemoryMap,
    m2: &MemoryMap,
) -> Result<BoundReport> {
    margin_constants(gamma)?;
    check_shapes(eval, probs, m1)?;
    check_shapes(eval, probs, m2)?;
    let labels = decision_profile(probs, gamma);
    let support: Vec<usize> = eval
        .pairs
        .iter()
        .filter(|p| p.2 > 0.0)
        .flat_map(|p| [p.0, p.1])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut flags = Vec::new();
    for (name, m) in [("first", m1), ("second", m2)] {
        for (i, &h) in support.iter().enumerate() {
            for &hp in &support[i + 1..] {
                if labels[h] == labels[hp] && !m.aliased(h, hp) {
                    flags.push(format!("{name} memory splits histories {h} and {hp} with equal profiles"));
                }
            }
        }
    }
    let test_weights = eval.test_weights();
    for &(h, hp, w) in &eval.pairs {
        if w <= 0.0 || labels[h] == labels[hp] {
            continue;
        }
        let witness: f64 = (0..eval.tests.len())
            .filter(|&t| is_witness(probs, h, hp, t, gamma) || is_witness(probs, hp, h, t, gamma))
            .map(|t| test_weights[t])
            .sum();
        if witness <= 0.0 {
            flags.push(format!("completeness fails on pair ({h}, {hp})"));
        }
    }
    let recoding = certify_recoding(m1, m2, &support)?;
    let table = BetTable::fair(eval, probs);
    let r1 = pair_regret(&table, &m_based_policy(m1.clone(), Resolver::CellOptimal, &table)?)?;
    let r2 = pair_regret(&table, &m_based_policy(m2.clone(), Resolver::CellOptimal, &table)?)?;
    let inputs = ReportInputs {
        gamma: Some(gamma),
        ..Default::default()
    };
    let mut report = BoundReport::new("cor5", recoding.conflicts.len() as f64, 0.0, None, inputs)
        .with_detail("support_size", support.len() as f64)
        .with_detail("memory_classes", recoding.phi.len() as f64)
        .with_detail("pair_regret_first", r1.pair_average)
        .with_detail("pair_regret_second", r2.pair_average);
    debug_assert_eq!(r1.per_history.len(), eval.histories.len());
    for f in flags {
        report.flag(f);
    }
    if recoding.is_bijection() {
        let maps: Vec<String> = recoding.psi.iter().map(|(a, b)| format!("{a}->{b}")).collect();
        report.note(format!("bijection {}", maps.join(",")));
    }
    Ok(report)
}

/// Builds two seeded relabelings of the decision-profile partition and
/// certifies they agree on the pair support.
pub fn verify_cor5(pomdp: &FinitePomdp, eval: &EvaluationDistribution, gamma: f64, seed: u64) -> Result<BoundReport> {
    let probs = fair_probs(pomdp, eval)?;
    let classes = profile_classes(&decision_profile(&probs, gamma));
    let n_classes = classes.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first: Vec<usize> = (0..n_classes).collect();
    first.shuffle(&mut rng);
    let mut second = first.clone();
    second.shuffle(&mut rng);
    if n_classes > 1 && first == second {
        second.rotate_left(1);
    }
    let m1 = MemoryMap::from_labels(classes.iter().map(|&c| first[c]).collect());
    let m2 = MemoryMap::from_labels(classes.iter().map(|&c| second[c] + n_classes).collect());
    let mut report = verify_cor5_with(eval, &probs, gamma, &m1, &m2)?;
    report.inputs.seed = Some(seed);
    Ok(report)
}
