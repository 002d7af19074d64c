use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mdp::FiniteMdp;
use super::pomdp::{
    cue_alias_environment, dyadic_psr_environment, fair_coin_environment, prop1_environment, FinitePomdp,
};
use super::scm::{build_l3_pair, ScmPair};
use crate::error::{LabError, Result};

/// JSON description of an environment: explicit tables or a named builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Mdp {
        kernel: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
    },
    Pomdp {
        transition: Vec<Vec<Vec<f64>>>,
        observation: Vec<Vec<f64>>,
        initial: Vec<f64>,
    },
    Prop1 {
        r: f64,
        #[serde(default = "two")]
        n_actions: usize,
    },
    L3,
    RandomMdp {
        n_states: usize,
        n_actions: usize,
    },
    RandomPomdp {
        n_latent: usize,
        n_actions: usize,
        n_obs: usize,
    },
    CueAlias {
        bias: f64,
    },
    LinearPsr,
    FairCoin,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Mdp(FiniteMdp),
    Pomdp(FinitePomdp),
    Scm(ScmPair),
}

impl Environment {
    pub fn into_mdp(self) -> Result<FiniteMdp> {
        match self {
            Environment::Mdp(m) => Ok(m),
            _ => Err(LabError::Config("this check needs a fully observed MDP".into())),
        }
    }

    pub fn into_pomdp(self) -> Result<FinitePomdp> {
        match self {
            Environment::Pomdp(p) => Ok(p),
            _ => Err(LabError::Config("this check needs a POMDP".into())),
        }
    }
}

impl EnvironmentSpec {
    /// Builds the environment; random builders draw from `seed`.
    pub fn build(&self, seed: u64) -> Result<Environment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = match self {
            EnvironmentSpec::Mdp { kernel, initial } => Environment::Mdp(FiniteMdp::from_nested(kernel, initial.clone())?),
            EnvironmentSpec::Pomdp {
                transition,
                observation,
                initial,
            } => Environment::Pomdp(FinitePomdp::from_nested(transition, observation, initial.clone())?),
            EnvironmentSpec::Prop1 { r, n_actions } => Environment::Pomdp(prop1_environment(*r, *n_actions)?),
            EnvironmentSpec::L3 => Environment::Scm(build_l3_pair()),
            EnvironmentSpec::RandomMdp { n_states, n_actions } => {
                Environment::Mdp(FiniteMdp::random(*n_states, *n_actions, &mut rng)?)
            }
            EnvironmentSpec::RandomPomdp {
                n_latent,
                n_actions,
                n_obs,
            } => Environment::Pomdp(FinitePomdp::random(*n_latent, *n_actions, *n_obs, &mut rng)?),
            EnvironmentSpec::CueAlias { bias } => Environment::Pomdp(cue_alias_environment(*bias)?),
            EnvironmentSpec::LinearPsr => Environment::Pomdp(dyadic_psr_environment()?),
            EnvironmentSpec::FairCoin => Environment::Pomdp(fair_coin_environment()?),
        };
        match &env {
            Environment::Mdp(m) => {
                m.validate()?;
            }
            Environment::Pomdp(p) => {
                p.validate()?;
            }
            Environment::Scm(_) => {}
        }
        Ok(env)
    }

    pub fn from_mdp(mdp: &FiniteMdp) -> Self {
        EnvironmentSpec::Mdp {
            kernel: mdp.to_nested(),
            initial: mdp.initial().to_vec(),
        }
    }

    pub fn from_pomdp(pomdp: &FinitePomdp) -> Self {
        let (transition, observation) = pomdp.to_nested();
        EnvironmentSpec::Pomdp {
            transition,
            observation,
            initial: pomdp.initial().to_vec(),
        }
    }
}
