use std::ffi::CStr;
use std::ptr;

use betlab_ffi::*;

fn last_error() -> String {
    let p = betlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn margin_constants_at_a_quarter() {
    let mut m = BetlabMarginConstants::default();
    assert_eq!(unsafe { betlab_margin_constants(0.25, &mut m) }, BetlabStatus::Ok);
    assert!((m.c_gamma - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.t_gamma - 3f64.sqrt()).abs() < 1e-15);
    assert!(!m.t_infinite);
    assert!(betlab_last_error().is_null());
}

#[test]
fn half_margin_marks_infinite_t() {
    let mut m = BetlabMarginConstants::default();
    assert_eq!(unsafe { betlab_margin_constants(0.5, &mut m) }, BetlabStatus::Ok);
    assert!(m.t_infinite);
    assert_eq!(m.c_gamma, 1.0);
}

#[test]
fn bad_gamma_sets_the_error_message() {
    let mut m = BetlabMarginConstants::default();
    assert_eq!(unsafe { betlab_margin_constants(0.6, &mut m) }, BetlabStatus::Domain);
    assert!(last_error().contains("gamma"));
    assert_eq!(unsafe { betlab_margin_constants(0.25, ptr::null_mut()) }, BetlabStatus::NullPointer);
}

#[test]
fn bet_regret_crosses_the_boundary() {
    let mut b = BetlabBetOutcome::default();
    assert_eq!(unsafe { betlab_bet_regret(0.8, 0.2, 0.75, &mut b) }, BetlabStatus::Ok);
    assert!((b.value_pi - 0.65).abs() < 1e-15);
    assert!((b.regret - 0.1875).abs() < 1e-15);
    assert_eq!(b.wrong_mass, 0.25);
    assert!((b.margin - 0.3).abs() < 1e-15);
    assert_eq!(unsafe { betlab_bet_regret(0.0, 0.0, 0.5, &mut b) }, BetlabStatus::Unsatisfiable);
}

#[test]
fn binomial_helpers() {
    let mut cdf = 0.0;
    assert_eq!(unsafe { betlab_binom_cdf(4, 0.5, 1, &mut cdf) }, BetlabStatus::Ok);
    assert!((cdf - 5.0 / 16.0).abs() < 1e-15);
    let mut median = 0u64;
    assert_eq!(unsafe { betlab_binom_median(4, 0.5, &mut median) }, BetlabStatus::Ok);
    assert_eq!(median, 2);
    assert_eq!(unsafe { betlab_binom_cdf(4, 1.5, 1, &mut cdf) }, BetlabStatus::Domain);
}

#[test]
fn mdp_handle_lifecycle() {
    let kernel = [0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7];
    let initial = [1.0, 0.0];
    let mut mdp = ptr::null_mut();
    let status = unsafe { betlab_mdp_new(2, 2, kernel.as_ptr(), 8, initial.as_ptr(), 2, &mut mdp) };
    assert_eq!(status, BetlabStatus::Ok);
    unsafe {
        assert_eq!(betlab_mdp_n_states(mdp), 2);
        assert_eq!(betlab_mdp_n_actions(mdp), 2);
        let mut p = 0.0;
        assert_eq!(betlab_mdp_prob(mdp, 1, 0, 1, &mut p), BetlabStatus::Ok);
        assert_eq!(p, 0.5);
        assert_eq!(betlab_mdp_prob(mdp, 2, 0, 1, &mut p), BetlabStatus::Domain);
        betlab_mdp_free(mdp);
        betlab_mdp_free(ptr::null_mut());
        assert_eq!(betlab_mdp_n_states(ptr::null()), 0);
    }
}

#[test]
fn mdp_constructor_rejects_bad_tables() {
    let mut mdp = ptr::null_mut();
    let bad = [0.9, 0.2, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7];
    let initial = [1.0, 0.0];
    let status = unsafe { betlab_mdp_new(2, 2, bad.as_ptr(), 8, initial.as_ptr(), 2, &mut mdp) };
    assert_eq!(status, BetlabStatus::NotStochastic);
    assert!(mdp.is_null());
    let status = unsafe { betlab_mdp_new(2, 2, bad.as_ptr(), 7, initial.as_ptr(), 2, &mut mdp) };
    assert_eq!(status, BetlabStatus::Shape);
    let status = unsafe { betlab_mdp_new(2, 2, ptr::null(), 8, initial.as_ptr(), 2, &mut mdp) };
    assert_eq!(status, BetlabStatus::NullPointer);
}

#[test]
fn thm1_report_through_the_abi() {
    let mut mdp = ptr::null_mut();
    assert_eq!(unsafe { betlab_mdp_random(4, 2, 7, &mut mdp) }, BetlabStatus::Ok);
    let mut exact = BetlabReport::default();
    let mut noisy = BetlabReport::default();
    unsafe {
        assert_eq!(betlab_verify_thm1(mdp, 0.0, 50, 0.25, &mut exact), BetlabStatus::Ok);
        assert_eq!(betlab_verify_thm1(mdp, 0.1, 50, 0.25, &mut noisy), BetlabStatus::Ok);
        assert_eq!(betlab_verify_thm1(mdp, 0.1, 50, 0.7, &mut noisy), BetlabStatus::Domain);
        assert_eq!(betlab_verify_thm1(ptr::null(), 0.1, 50, 0.25, &mut noisy), BetlabStatus::NullPointer);
        betlab_mdp_free(mdp);
    }
    assert!(exact.satisfied && noisy.satisfied);
    assert_eq!(exact.delta_bar, 0.0);
    assert!(noisy.delta_bar > 0.0);
    assert!(noisy.rhs > exact.rhs);
    assert_eq!(exact.n_flags, 0);
    assert!((exact.slack - (exact.rhs - exact.lhs)).abs() < 1e-15);
}

#[test]
fn test_probability_on_the_cue_environment() {
    const U: usize = 0;
    const ZERO: usize = 1;
    const ONE: usize = 2;
    const CUE0: usize = 3;
    let mut pomdp = ptr::null_mut();
    assert_eq!(unsafe { betlab_pomdp_cue_alias(0.8, &mut pomdp) }, BetlabStatus::Ok);
    let obs = [CUE0, U];
    let acts = [0usize];
    let test_actions = [1usize];
    let mut p = 0.0;
    unsafe {
        let s = betlab_test_probability(pomdp, obs.as_ptr(), 2, acts.as_ptr(), test_actions.as_ptr(), 1, [ZERO].as_ptr(), 1, &mut p);
        assert_eq!(s, BetlabStatus::Ok);
        assert!((p - 0.8).abs() < 1e-15);
        let both = [ZERO, ONE];
        let s = betlab_test_probability(pomdp, obs.as_ptr(), 2, acts.as_ptr(), test_actions.as_ptr(), 1, both.as_ptr(), 2, &mut p);
        assert_eq!(s, BetlabStatus::Ok);
        assert!((p - 1.0).abs() < 1e-15);
        let impossible = [CUE0, ZERO];
        let s = betlab_test_probability(pomdp, impossible.as_ptr(), 2, acts.as_ptr(), test_actions.as_ptr(), 1, [ZERO].as_ptr(), 1, &mut p);
        assert_eq!(s, BetlabStatus::ZeroProbability);
        let s = betlab_test_probability(pomdp, obs.as_ptr(), 2, acts.as_ptr(), test_actions.as_ptr(), 0, ptr::null(), 0, &mut p);
        assert_eq!(s, BetlabStatus::Domain);
        betlab_pomdp_free(pomdp);
    }
}

#[test]
fn pomdp_constructor_validates() {
    let transition = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
    let observation = [1.0, 0.0, 0.0, 1.0];
    let initial = [0.5, 0.5];
    let mut pomdp = ptr::null_mut();
    let s = unsafe {
        betlab_pomdp_new(2, 2, 2, transition.as_ptr(), 8, observation.as_ptr(), 4, initial.as_ptr(), 2, &mut pomdp)
    };
    assert_eq!(s, BetlabStatus::Ok);
    unsafe { betlab_pomdp_free(pomdp) };
    let bad_initial = [0.5, 0.6];
    let s = unsafe {
        betlab_pomdp_new(2, 2, 2, transition.as_ptr(), 8, observation.as_ptr(), 4, bad_initial.as_ptr(), 2, &mut pomdp)
    };
    assert_eq!(s, BetlabStatus::NotStochastic);
    assert!(last_error().contains("initial"));
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(betlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
