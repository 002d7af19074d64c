use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pomdp::{enumerate_histories_capped, FinitePomdp, History};
use crate::error::{LabError, Result};
use crate::goals::Test;

const WEIGHT_TOL: f64 = 1e-10;

/// Weighted histories `H`, weighted tests `D`, weighted history pairs `P`
/// (index pairs into `histories`, sharing their last observation), and
/// optional regime labels per history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDistribution {
    pub histories: Vec<(History, f64)>,
    pub tests: Vec<(Test, f64)>,
    pub pairs: Vec<(usize, usize, f64)>,
    pub regimes: Option<Vec<usize>>,
}

fn check_weights(label: &str, weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for w in weights {
        if w.is_nan() || w < 0.0 {
            return Err(LabError::Domain(format!("{label} weights must be nonnegative")));
        }
        total += w;
    }
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(LabError::Domain(format!("{label} weights sum to {total}, not 1")));
    }
    Ok(())
}

impl EvaluationDistribution {
    pub fn new(
        histories: Vec<(History, f64)>,
        tests: Vec<(Test, f64)>,
        pairs: Vec<(usize, usize, f64)>,
        regimes: Option<Vec<usize>>,
    ) -> Result<Self> {
        check_weights("history", histories.iter().map(|h| h.1))?;
        check_weights("test", tests.iter().map(|t| t.1))?;
        if !pairs.is_empty() {
            check_weights("pair", pairs.iter().map(|p| p.2))?;
        }
        for &(i, j, _) in &pairs {
            let (hi, hj) = match (histories.get(i), histories.get(j)) {
                (Some(a), Some(b)) => (&a.0, &b.0),
                _ => return Err(LabError::Shape(format!("pair ({i}, {j}) indexes past the history list"))),
            };
            if hi.last_observation() != hj.last_observation() {
                return Err(LabError::Domain(format!("pair ({hi}, {hj}) does not share its last observation")));
            }
        }
        if let Some(labels) = &regimes {
            if labels.len() != histories.len() {
                return Err(LabError::Shape("one regime label per history is required".into()));
            }
        }
        Ok(Self {
            histories,
            tests,
            pairs,
            regimes,
        })
    }

    /// Exact enumeration at `length` under uniformly random actions, uniform
    /// weights on `tests`, and the default pair distribution.
    pub fn enumerated(pomdp: &FinitePomdp, length: usize, cap: usize, tests: Vec<Test>) -> Result<Self> {
        let histories = enumerate_histories_capped(pomdp, length, cap)?;
        let total: f64 = histories.iter().map(|h| h.1).sum();
        let histories: Vec<(History, f64)> = histories.into_iter().map(|(h, w)| (h, w / total)).collect();
        let pairs = default_pairs(&histories);
        Self::new(histories, uniform(tests)?, pairs, None)
    }

    pub fn with_regimes(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.histories.len() {
            return Err(LabError::Shape("one regime label per history is required".into()));
        }
        self.regimes = Some(labels);
        Ok(self)
    }

    pub fn with_pairs(mut self, pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        self.pairs = pairs;
        Self::new(self.histories, self.tests, self.pairs, self.regimes)
    }

    pub fn history_weights(&self) -> Vec<f64> {
        self.histories.iter().map(|h| h.1).collect()
    }

    pub fn test_weights(&self) -> Vec<f64> {
        self.tests.iter().map(|t| t.1).collect()
    }

    pub fn test_list(&self) -> Vec<Test> {
        self.tests.iter().map(|t| t.0.clone()).collect()
    }
}

/// Uniform weights over a nonempty list.
pub fn uniform<T>(items: Vec<T>) -> Result<Vec<(T, f64)>> {
    if items.is_empty() {
        return Err(LabError::Domain("cannot put a uniform weight on an empty list".into()));
    }
    let w = 1.0 / items.len() as f64;
    Ok(items.into_iter().map(|x| (x, w)).collect())
}

/// `h ~ H`, then `h' ~ H` conditioned on `last(h') = last(h)`.
pub fn default_pairs(histories: &[(History, f64)]) -> Vec<(usize, usize, f64)> {
    let mut by_last: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (h, _)) in histories.iter().enumerate() {
        by_last.entry(h.last_observation()).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for (i, (h, w)) in histories.iter().enumerate() {
        let group = &by_last[&h.last_observation()];
        let mass: f64 = group.iter().map(|&j| histories[j].1).sum();
        if mass <= 0.0 {
            continue;
        }
        for &j in group {
            let wp = w * histories[j].1 / mass;
            if wp > 0.0 {
                pairs.push((i, j, wp));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::pomdp::cue_alias_environment;
    use crate::goals::Test;

    #[test]
    fn enumerated_distribution_is_normalized() {
        let env = cue_alias_environment(0.8).unwrap();
        let test = Test::singleton(vec![0], vec![1]);
        let eval = EvaluationDistribution::enumerated(&env, 1, 4, vec![test]).unwrap();
        assert_eq!(eval.histories.len(), 4);
        let total: f64 = eval.pairs.iter().map(|p| p.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for &(i, j, _) in &eval.pairs {
            assert_eq!(
                eval.histories[i].0.last_observation(),
                eval.histories[j].0.last_observation()
            );
        }
    }

    #[test]
    fn rejects_mismatched_pairs_and_weights() {
        let h0 = History::initial(0);
        let h1 = History::initial(1);
        let t = Test::singleton(vec![0], vec![0]);
        let hs = vec![(h0, 0.5), (h1, 0.5)];
        assert!(EvaluationDistribution::new(hs.clone(), vec![(t.clone(), 1.0)], vec![(0, 1, 1.0)], None).is_err());
        assert!(EvaluationDistribution::new(hs.clone(), vec![(t.clone(), 0.7)], vec![], None).is_err());
        assert!(EvaluationDistribution::new(hs, vec![(t, 1.0)], vec![(0, 0, 1.0)], Some(vec![0])).is_err());
    }
}
