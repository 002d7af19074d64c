//! Exact tabular environments and the builders for the constructions the
//! bound checks rely on.

pub mod eval;
pub mod mdp;
pub mod pomdp;
pub mod scm;
pub mod spec;

pub use eval::{default_pairs, uniform, EvaluationDistribution};
pub use mdp::{FiniteMdp, ValidationReport, STOCHASTIC_TOL};
pub use pomdp::{
    build_prop1_pair, cue_alias_environment, dyadic_psr_environment, enumerate_histories, enumerate_histories_capped,
    fair_coin_environment, filter_belief, prop1_environment, Belief, FinitePomdp, History, DEFAULT_DEPTH_CAP,
};
pub use scm::{build_l3_pair, ScmModel, ScmPair};
pub use spec::{Environment, EnvironmentSpec};
