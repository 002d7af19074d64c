use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Which member of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScmModel {
    /// `S' = U`.
    Copy,
    /// `S' = A xor U`.
    Xor,
}

/// `((observed_a, observed_s, alt_a), first model's answer, second model's answer)`.
pub type CounterfactualRow = ((u8, u8, u8), u8, u8);

/// Two binary structural models over exogenous `U ~ Bernoulli(1/2)` that share
/// their interventional kernel but not their counterfactual coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScmPair {
    pub first: ScmModel,
    pub second: ScmModel,
}

impl ScmModel {
    pub fn next_state(self, action: u8, u: u8) -> u8 {
        match self {
            ScmModel::Copy => u,
            ScmModel::Xor => action ^ u,
        }
    }

    /// `P(S' = 1 | do(A = a))`, exactly.
    pub fn interventional(self, action: u8) -> Ratio<u32> {
        let half = Ratio::new(1, 2);
        (0..2u8)
            .filter(|&u| self.next_state(action, u) == 1)
            .map(|_| half)
            .sum()
    }

    /// Abduces `U` from the evidence `(A = observed_a, S' = observed_s)` and
    /// replays the model under `alt_a`.
    pub fn counterfactual(self, observed_a: u8, observed_s: u8, alt_a: u8) -> Result<u8> {
        if observed_a > 1 || observed_s > 1 || alt_a > 1 {
            return Err(LabError::Abduction("actions and outcomes are binary".into()));
        }
        let consistent: Vec<u8> = (0..2u8).filter(|&u| self.next_state(observed_a, u) == observed_s).collect();
        match consistent.as_slice() {
            [u] => Ok(self.next_state(alt_a, *u)),
            [] => Err(LabError::Abduction(format!(
                "no exogenous value explains a={observed_a}, s'={observed_s}"
            ))),
            _ => {
                let outcomes: Vec<u8> = consistent.iter().map(|&u| self.next_state(alt_a, u)).collect();
                if outcomes.windows(2).all(|w| w[0] == w[1]) {
                    Ok(outcomes[0])
                } else {
                    Err(LabError::Abduction("evidence leaves the counterfactual undetermined".into()))
                }
            }
        }
    }
}

impl ScmPair {
    pub fn models(&self) -> [ScmModel; 2] {
        [self.first, self.second]
    }

    /// Largest gap between the two interventional kernels, exactly.
    pub fn kernel_gap(&self) -> Ratio<u32> {
        (0..2u8)
            .map(|a| {
                let x = self.first.interventional(a);
                let y = self.second.interventional(a);
                if x > y {
                    x - y
                } else {
                    y - x
                }
            })
            .max()
            .unwrap_or_default()
    }

    /// Every `(observed_a, observed_s, alt_a)` cell with the two models' answers.
    pub fn counterfactual_table(&self) -> Result<Vec<CounterfactualRow>> {
        let mut rows = Vec::with_capacity(8);
        for a in 0..2u8 {
            for s in 0..2u8 {
                for alt in 0..2u8 {
                    rows.push(((a, s, alt), self.first.counterfactual(a, s, alt)?, self.second.counterfactual(a, s, alt)?));
                }
            }
        }
        Ok(rows)
    }
}

pub fn build_l3_pair() -> ScmPair {
    let pair = ScmPair {
        first: ScmModel::Copy,
        second: ScmModel::Xor,
    };
    debug_assert_eq!(pair.kernel_gap(), Ratio::new(0, 1));
    pair
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_coincide_exactly() {
        let pair = build_l3_pair();
        for a in 0..2 {
            assert_eq!(pair.first.interventional(a), Ratio::new(1, 2));
            assert_eq!(pair.second.interventional(a), Ratio::new(1, 2));
        }
        assert_eq!(pair.kernel_gap(), Ratio::new(0, 1));
    }

    #[test]
    fn structural_maps_differ() {
        let differs = (0..2u8).any(|a| (0..2u8).any(|u| ScmModel::Copy.next_state(a, u) != ScmModel::Xor.next_state(a, u)));
        assert!(differs);
    }

    #[test]
    fn counterfactual_outcomes() {
        assert_eq!(ScmModel::Copy.counterfactual(0, 1, 1).unwrap(), 1);
        assert_eq!(ScmModel::Xor.counterfactual(0, 1, 1).unwrap(), 0);
        assert_eq!(ScmModel::Xor.counterfactual(1, 1, 1).unwrap(), 1);
        assert!(ScmModel::Copy.counterfactual(0, 2, 1).is_err());
    }

    #[test]
    fn same_action_counterfactual_is_factual() {
        for model in [ScmModel::Copy, ScmModel::Xor] {
            for a in 0..2 {
                for s in 0..2 {
                    assert_eq!(model.counterfactual(a, s, a).unwrap(), s);
                }
            }
        }
    }

    #[test]
    fn table_has_a_disagreeing_cell() {
        let table = build_l3_pair().counterfactual_table().unwrap();
        assert!(table.iter().any(|(_, x, y)| x != y));
    }
}
