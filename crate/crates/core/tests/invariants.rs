//! Property checks over seeded environments and policies.

use betlab::agents::{
    m_based_policy, noisy_policy, optimal_policy, regret_profile, BetTable, BranchPolicy, MemoryMap, Resolver,
};
use betlab::environments::{
    cue_alias_environment, enumerate_histories_capped, pomdp::cue, EvaluationDistribution, FiniteMdp, FinitePomdp,
    History,
};
use betlab::goals::{probability_table, test_probability, test_universe, Test, TestFamily};
use betlab::numerics::bet_regret;
use betlab::verifier::{verify_thm1, verify_thm4, verify_thm5, verify_thm5_table, verify_thm7_table};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NOISE_GRID: [f64; 5] = [0.0, 0.01, 0.05, 0.1, 0.25];

fn seeded_pomdp(seed: u64, latent: usize, obs: usize) -> FinitePomdp {
    FinitePomdp::random(latent, 2, obs, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn fair_setup(env: &FinitePomdp, depth: usize) -> (EvaluationDistribution, Vec<Vec<f64>>) {
    let tests = test_universe(2, env.n_obs(), depth, &[TestFamily::Singletons, TestFamily::Complements]).unwrap();
    let eval = EvaluationDistribution::enumerated(env, 1, 6, tests).unwrap();
    let histories: Vec<History> = eval.histories.iter().map(|h| h.0.clone()).collect();
    let probs = probability_table(env, &histories, &eval.test_list()).unwrap();
    (eval, probs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn history_weights_sum_to_one(seed in 0u64..1000, latent in 1usize..=3, obs in 1usize..=3, len in 0usize..=3) {
        let env = seeded_pomdp(seed, latent, obs);
        let hs = enumerate_histories_capped(&env, len, 6).unwrap();
        let total: f64 = hs.iter().map(|h| h.1).sum();
        prop_assert!((total - 1.0).abs() <= 1e-10, "total {}", total);
    }

    #[test]
    fn complement_event_has_complement_probability(seed in 0u64..1000, len in 0usize..=2, depth in 1usize..=2) {
        let env = seeded_pomdp(seed, 3, 2);
        for (h, _) in enumerate_histories_capped(&env, len, 6).unwrap() {
            for t in test_universe(2, 2, depth, &[TestFamily::Singletons, TestFamily::PrefixCylinders]).unwrap() {
                let p = test_probability(&env, &h, &t).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                if let Some(c) = t.complement(2) {
                    let pc = test_probability(&env, &h, &c).unwrap();
                    prop_assert!((p + pc - 1.0).abs() <= 1e-12, "{} + {}", p, pc);
                }
            }
        }
    }

    #[test]
    fn noisy_average_regret_is_monotone(seed in 0u64..1000) {
        let env = seeded_pomdp(seed, 3, 2);
        let (eval, probs) = fair_setup(&env, 1);
        let table = BetTable::fair(&eval, &probs);
        let mut last = -1.0;
        for eps in NOISE_GRID {
            let avg = regret_profile(&noisy_policy(eps, optimal_policy()).unwrap(), &table).unwrap().average;
            prop_assert!(avg >= last - 1e-15, "eps {}: {} < {}", eps, avg, last);
            last = avg;
        }
    }

    #[test]
    fn wrong_mass_lhs_monotone_and_bound_holds(seed in 0u64..1000, gamma in 0.05f64..0.45) {
        let env = seeded_pomdp(seed, 3, 2);
        let (eval, _) = fair_setup(&env, 2);
        let mut last = -1.0;
        for eps in NOISE_GRID {
            let rows = verify_thm4(&env, &noisy_policy(eps, optimal_policy()).unwrap(), &eval, gamma).unwrap();
            prop_assert!(rows.iter().all(|r| r.satisfied));
            prop_assert!(rows[0].lhs >= last);
            last = rows[0].lhs;
        }
    }

    #[test]
    fn alias_lhs_monotone_and_bound_holds(seed in 0u64..1000, alphabet in 1usize..=3, gamma in 0.02f64..0.3) {
        let env = seeded_pomdp(seed, 3, 2);
        let (eval, probs) = fair_setup(&env, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let memory = MemoryMap::random(eval.histories.len(), alphabet, &mut rng).unwrap();
        let table = BetTable::fair(&eval, &probs);
        let base = m_based_policy(memory.clone(), Resolver::CellOptimal, &table).unwrap();
        let mut last = -1.0;
        for eps in NOISE_GRID {
            let policy = noisy_policy(eps, base.clone()).unwrap();
            let r = verify_thm7_table(&eval, &probs, &memory, &policy, gamma).unwrap();
            prop_assert!(r.satisfied, "{:?}", r);
            prop_assert!(r.lhs >= last);
            last = r.lhs;
        }
    }

    #[test]
    fn threshold_bound_holds_across_noise(seed in 0u64..1000, k in 1usize..=32) {
        let env = seeded_pomdp(seed, 3, 2);
        let tests = test_universe(2, 2, 1, &[TestFamily::Singletons]).unwrap();
        let eval = EvaluationDistribution::enumerated(&env, 1, 4, tests).unwrap();
        for eps in NOISE_GRID {
            let r = verify_thm5(&env, &noisy_policy(eps, optimal_policy()).unwrap(), &eval, k).unwrap();
            prop_assert!(r.satisfied, "eps {} K {}: {} > {}", eps, k, r.lhs, r.rhs);
        }
    }

    #[test]
    fn zero_regret_reports_have_nonnegative_slack(seed in 0u64..1000, n in 5u64..=60, gamma in 0.05f64..0.45) {
        let mdp = FiniteMdp::random(3, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r = verify_thm1(&mdp, &optimal_policy(), n, gamma).unwrap();
        prop_assert!(r.slack >= 0.0);
        let env = seeded_pomdp(seed, 3, 2);
        let (eval, _) = fair_setup(&env, 1);
        for r in verify_thm4(&env, &optimal_policy(), &eval, gamma).unwrap() {
            prop_assert!(r.slack >= 0.0);
        }
        let r = verify_thm5(&env, &optimal_policy(), &eval, 4).unwrap();
        prop_assert!(r.slack >= 0.0);
    }

    #[test]
    fn cell_optimal_resolver_minimizes_pair_regret(seed in 0u64..1000, alphabet in 1usize..=2) {
        let env = seeded_pomdp(seed, 3, 2);
        let tests = test_universe(2, 2, 1, &[TestFamily::Singletons]).unwrap();
        let eval = EvaluationDistribution::enumerated(&env, 1, 6, tests).unwrap();
        let histories: Vec<History> = eval.histories.iter().map(|h| h.0.clone()).collect();
        let probs = probability_table(&env, &histories, &eval.test_list()).unwrap();
        let table = BetTable::fair(&eval, &probs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let memory = MemoryMap::random(eval.histories.len(), alphabet, &mut rng).unwrap();
        let policy = m_based_policy(memory.clone(), Resolver::CellOptimal, &table).unwrap();
        let achieved = regret_profile(&policy, &table).unwrap().pair_average.unwrap();

        // Regret is linear in q per (memory id, goal), so the minimum over all
        // memory-based policies is attained on {0, 1}-valued assignments.
        let weights = table.decision_weights();
        let goal_weights = eval.test_weights();
        let ids: Vec<usize> = {
            let mut v = memory.labels().to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut best = f64::INFINITY;
        let bits = ids.len() * goal_weights.len();
        prop_assume!(bits <= 16);
        for mask in 0u32..(1 << bits) {
            let mut total = 0.0;
            for (h, row) in probs.iter().enumerate() {
                let slot = ids.iter().position(|&i| i == memory.labels()[h]).unwrap();
                for (g, &p) in row.iter().enumerate() {
                    let q = ((mask >> (slot * goal_weights.len() + g)) & 1) as f64;
                    total += weights[h] * goal_weights[g] * bet_regret(p, 1.0 - p, q).unwrap().regret;
                }
            }
            best = best.min(total);
        }
        prop_assert!((achieved - best).abs() <= 1e-12, "{} vs {}", achieved, best);
    }
}

/// The squared-error left-hand side of the threshold-recovery bound is not
/// monotone in policy noise: at a coarse grid a noisy bettor can land closer
/// to the truth than the exact one. One cell with `p = 0.76` and `K = 2`
/// (thresholds 1/4 and 3/4): the exact bettor takes branch 1 at both, so
/// `p̂ = 1`; with noise `ε` it takes branch 1 w.p. `1 − ε` at both, so
/// `p̂ = 1 − ε` and the error `(0.24 − ε)²` shrinks as `ε` grows.
#[test]
fn threshold_squared_error_can_fall_as_noise_grows() {
    let env = cue_alias_environment(0.76).unwrap();
    let h = History::new(vec![cue::OBS_CUE0, cue::OBS_U], vec![0]).unwrap();
    let t = Test::singleton(vec![0], vec![cue::OBS_ZERO]);
    let p = test_probability(&env, &h, &t).unwrap();
    assert!((p - 0.76).abs() < 1e-15);
    let eval = EvaluationDistribution::new(vec![(h, 1.0)], vec![(t, 1.0)], vec![], None).unwrap();
    let mut last = f64::INFINITY;
    for eps in [0.0, 0.05, 0.1, 0.2] {
        let policy: BranchPolicy = noisy_policy(eps, optimal_policy()).unwrap();
        let r = verify_thm5_table(&eval, &[vec![p]], &policy, 2).unwrap();
        let expected = (0.24f64 - eps).powi(2);
        assert!((r.lhs - expected).abs() < 1e-12, "eps {eps}: {} vs {expected}", r.lhs);
        assert!(r.satisfied);
        assert!(r.lhs < last);
        last = r.lhs;
    }
}
