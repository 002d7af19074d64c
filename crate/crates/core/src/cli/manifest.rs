//! Experiment manifests: what to build and which checks to run over which
//! parameter grid.

use serde::{Deserialize, Serialize};

use crate::agents::{constant_policy, noisy_policy, optimal_policy, BranchPolicy, MemoryMap, Resolver};
use crate::environments::{
    default_pairs, enumerate_histories_capped, uniform, EnvironmentSpec, EvaluationDistribution, FinitePomdp, History,
};
use crate::error::{LabError, Result};
use crate::goals::{test_universe, Test, TestFamily};
use crate::numerics::margin_constants;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub jobs: Vec<JobSpec>,
}

/// Check identifiers, one per bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Thm1,
    Cor1,
    Cor2,
    Thm4,
    Prop1,
    Thm5,
    Thm6,
    Thm7,
    Cor3,
    Cor4,
    Cor5,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub check: Check,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSpec>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemorySpec>,
    #[serde(default = "default_resolver")]
    pub resolver: Resolver,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub params: JobParams,
}

fn default_resolver() -> Resolver {
    Resolver::CellOptimal
}

/// Base policy; the sweep's `epsilon` axis adds branch-flip noise on top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    Optimal,
    Constant {
        q: f64,
    },
}

impl PolicySpec {
    pub fn build(&self, epsilon: f64) -> Result<BranchPolicy> {
        let base = match self {
            PolicySpec::Optimal => optimal_policy(),
            PolicySpec::Constant { q } => constant_policy(*q)?,
        };
        if epsilon == 0.0 {
            Ok(base)
        } else {
            noisy_policy(epsilon, base)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySpec {
    pub observations: Vec<usize>,
    #[serde(default)]
    pub actions: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    pub actions: Vec<usize>,
    pub event: Vec<Vec<usize>>,
    pub weight: f64,
}

/// Regime labels: explicit per history, or the history's first observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegimeSpec {
    Labels(Vec<usize>),
    Rule(RegimeRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeRule {
    FirstObservation,
}

/// Histories, tests, pairs and regimes. Explicit lists take precedence over
/// the enumerated defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    #[serde(default = "one")]
    pub history_length: usize,
    #[serde(default = "four")]
    pub history_cap: usize,
    #[serde(default = "one")]
    pub test_depth: usize,
    #[serde(default = "default_families")]
    pub families: Vec<TestFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histories: Option<Vec<HistorySpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<TestSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<RegimeSpec>,
    /// Test-index partition for the per-block check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

fn default_families() -> Vec<TestFamily> {
    vec![TestFamily::Singletons, TestFamily::Complements]
}

impl EvaluationSpec {
    pub fn build(&self, pomdp: &FinitePomdp) -> Result<EvaluationDistribution> {
        let tests = match &self.tests {
            Some(list) => list
                .iter()
                .map(|t| Ok((Test::new(t.actions.clone(), t.event.iter().cloned().collect())?, t.weight)))
                .collect::<Result<Vec<_>>>()?,
            None => uniform(test_universe(pomdp.n_actions(), pomdp.n_obs(), self.test_depth, &self.families)?)?,
        };
        let mut eval = match &self.histories {
            Some(list) => {
                let hs = list
                    .iter()
                    .map(|h| Ok((History::new(h.observations.clone(), h.actions.clone())?, h.weight)))
                    .collect::<Result<Vec<_>>>()?;
                let pairs = default_pairs(&hs);
                EvaluationDistribution::new(hs, tests, pairs, None)?
            }
            None => {
                let hs = enumerate_histories_capped(pomdp, self.history_length, self.history_cap)?;
                let total: f64 = hs.iter().map(|h| h.1).sum();
                let hs: Vec<(History, f64)> = hs.into_iter().map(|(h, w)| (h, w / total)).collect();
                let pairs = default_pairs(&hs);
                EvaluationDistribution::new(hs, tests, pairs, None)?
            }
        };
        if let Some(pairs) = &self.pairs {
            eval = eval.with_pairs(pairs.clone())?;
        }
        if let Some(regimes) = &self.regimes {
            let labels = match regimes {
                RegimeSpec::Labels(l) => l.clone(),
                RegimeSpec::Rule(RegimeRule::FirstObservation) => {
                    eval.histories.iter().map(|h| h.0.observations()[0]).collect()
                }
            };
            eval = eval.with_regimes(labels)?;
        }
        Ok(eval)
    }
}

/// How `M(h)` is built over the evaluation's history list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemorySpec {
    Identity,
    Constant,
    /// Seeded uniform ids.
    Random { alphabet: usize },
    Labels { ids: Vec<usize> },
    /// `M(h)` = first observation of `h`.
    FirstObservation,
}

impl MemorySpec {
    pub fn build(&self, eval: &EvaluationDistribution, seed: u64) -> Result<MemoryMap> {
        use rand::SeedableRng;
        let n = eval.histories.len();
        match self {
            MemorySpec::Identity => Ok(MemoryMap::identity(n)),
            MemorySpec::Constant => Ok(MemoryMap::constant(n)),
            MemorySpec::Random { alphabet } => {
                MemoryMap::random(n, *alphabet, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
            }
            MemorySpec::Labels { ids } => {
                if ids.len() != n {
                    return Err(LabError::Config(format!("memory lists {} ids for {n} histories", ids.len())));
                }
                Ok(MemoryMap::from_labels(ids.clone()))
            }
            MemorySpec::FirstObservation => Ok(MemoryMap::from_labels(
                eval.histories.iter().map(|h| h.0.observations()[0]).collect(),
            )),
        }
    }
}

/// Parameter axes; a job runs once per point of their product. Empty axes
/// take the listed default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Composite-goal depth (default 50).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<u64>,
    /// Threshold grid size (default 8).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k: Vec<usize>,
    /// Policy noise (default 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon: Vec<f64>,
    /// Margin (default 0.25).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<f64>,
    /// Do-kernel deviation budget (default 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps_cmp: Vec<f64>,
}

/// Check-specific scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct JobParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Saturate the do-kernel budget on the worst single entry.
    #[serde(default)]
    pub adversarial: bool,
    /// Basis histories for operator recovery; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<HistorySpec>>,
    /// Overrides the manifest seed for this job.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// One point of a job's sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: u64,
    pub k: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub eps_cmp: f64,
}

fn axis<T: Copy>(values: &[T], default: T) -> Vec<T> {
    if values.is_empty() {
        vec![default]
    } else {
        values.to_vec()
    }
}

impl SweepSpec {
    /// Grid points in a fixed nesting order: `n`, `k`, `epsilon`, `gamma`, `eps_cmp`.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &n in &axis(&self.n, 50) {
            for &k in &axis(&self.k, 8) {
                for &epsilon in &axis(&self.epsilon, 0.0) {
                    for &gamma in &axis(&self.gamma, 0.25) {
                        for &eps_cmp in &axis(&self.eps_cmp, 0.0) {
                            out.push(SweepPoint {
                                n,
                                k,
                                epsilon,
                                gamma,
                                eps_cmp,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for &g in &self.gamma {
            margin_constants(g)?;
        }
        if self.n.contains(&0) {
            return Err(LabError::Domain("n must be at least 1".into()));
        }
        if self.k.contains(&0) {
            return Err(LabError::Domain("K must be at least 1".into()));
        }
        if let Some(e) = self.epsilon.iter().chain(&self.eps_cmp).find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(LabError::Domain(format!("noise levels must lie in [0, 1], got {e}")));
        }
        Ok(())
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// Static checks that do not need to build environments.
    pub fn validate(&self) -> Result<()> {
        if self.jobs.is_empty() {
            return Err(LabError::Config(format!("manifest '{}' has no jobs", self.name)));
        }
        for (i, job) in self.jobs.iter().enumerate() {
            job.sweep
                .validate()
                .map_err(|e| LabError::Config(format!("job {i} ({:?}): {e}", job.check)))?;
            let needs_env = !matches!(job.check, Check::Cor2 | Check::Prop1);
            if needs_env && job.environment.is_none() {
                return Err(LabError::Config(format!("job {i} ({:?}) needs an environment", job.check)));
            }
            let needs_memory = matches!(job.check, Check::Thm7 | Check::Cor3 | Check::Cor4);
            if needs_memory && job.memory.is_none() {
                return Err(LabError::Config(format!("job {i} ({:?}) needs a memory map", job.check)));
            }
        }
        Ok(())
    }

    pub fn to_pretty_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
