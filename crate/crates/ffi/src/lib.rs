//! C ABI over `betlab`.
//!
//! Every fallible function returns a [`BetlabStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be read with [`betlab_last_error`]. Environments cross the boundary as
//! opaque handles that the caller releases with the matching `_free`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use betlab::agents::{noisy_policy, optimal_policy};
use betlab::environments::{cue_alias_environment, FiniteMdp, FinitePomdp, History};
use betlab::goals::{test_probability, Test};
use betlab::numerics::{bet_regret, binom_cdf, binom_median, margin_constants};
use betlab::verifier::verify_thm1;
use betlab::LabError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetlabStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Unsatisfiable = 3,
    NotStochastic = 4,
    Shape = 5,
    Precondition = 6,
    ZeroProbability = 7,
    CapExceeded = 8,
    Singular = 9,
    Other = 10,
    Panic = 11,
}

impl From<&LabError> for BetlabStatus {
    fn from(e: &LabError) -> Self {
        match e {
            LabError::Domain(_) => Self::Domain,
            LabError::Unsatisfiable => Self::Unsatisfiable,
            LabError::NotStochastic { .. } => Self::NotStochastic,
            LabError::Shape(_) => Self::Shape,
            LabError::Precondition(_) => Self::Precondition,
            LabError::ZeroProbability => Self::ZeroProbability,
            LabError::CapExceeded { .. } => Self::CapExceeded,
            LabError::Singular { .. } => Self::Singular,
            LabError::Abduction(_) | LabError::Config(_) | LabError::Io(_) => Self::Other,
        }
    }
}

/// Opaque finite MDP.
pub struct BetlabMdp {
    inner: FiniteMdp,
}

/// Opaque finite POMDP.
pub struct BetlabPomdp {
    inner: FinitePomdp,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BetlabMarginConstants {
    pub gamma: f64,
    pub c_gamma: f64,
    /// Meaningless when `t_infinite` is set.
    pub t_gamma: f64,
    pub t_infinite: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BetlabBetOutcome {
    pub value_pi: f64,
    pub value_star: f64,
    pub regret: f64,
    pub wrong_mass: f64,
    pub margin: f64,
}

/// Summary of one bound check.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BetlabReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub delta_bar: f64,
    pub satisfied: bool,
    pub vacuous: bool,
    /// Number of failed assumptions.
    pub n_flags: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (BetlabStatus, String)>) -> BetlabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BetlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BetlabStatus::Panic
        }
    }
}

fn lab(e: LabError) -> (BetlabStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (BetlabStatus, String) {
    (BetlabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (BetlabStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), (BetlabStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn betlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn betlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `c(γ)` and `t_γ` for γ in (0, 1/2].
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_margin_constants(gamma: f64, out: *mut BetlabMarginConstants) -> BetlabStatus {
    guard(|| {
        let m = margin_constants(gamma).map_err(lab)?;
        let value = BetlabMarginConstants {
            gamma: m.gamma,
            c_gamma: m.c_gamma,
            t_gamma: m.t_gamma.unwrap_or(f64::INFINITY),
            t_infinite: m.t_is_infinite(),
        };
        write(out, value, "out")
    })
}

/// Value and regret of choosing branch L with probability `q`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_bet_regret(u_l: f64, u_r: f64, q: f64, out: *mut BetlabBetOutcome) -> BetlabStatus {
    guard(|| {
        let b = bet_regret(u_l, u_r, q).map_err(lab)?;
        let value = BetlabBetOutcome {
            value_pi: b.value_pi,
            value_star: b.value_star,
            regret: b.regret,
            wrong_mass: b.wrong_mass,
            margin: b.margin,
        };
        write(out, value, "out")
    })
}

/// `Pr(Binomial(n, p) ≤ k)`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_binom_cdf(n: u64, p: f64, k: u64, out: *mut f64) -> BetlabStatus {
    guard(|| write(out, binom_cdf(n, p, k).map_err(lab)?, "out"))
}

/// Smallest `m` with `Pr(Binomial(n, p) ≤ m) ≥ 1/2`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_binom_median(n: u64, p: f64, out: *mut u64) -> BetlabStatus {
    guard(|| write(out, binom_median(n, p).map_err(lab)?, "out"))
}

/// Builds an MDP from a row-major `[s][a][s']` kernel and an initial
/// distribution. Rows must be stochastic.
///
/// # Safety
/// `kernel` and `initial` must point to `kernel_len` and `initial_len`
/// readable doubles; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_mdp_new(
    n_states: usize,
    n_actions: usize,
    kernel: *const f64,
    kernel_len: usize,
    initial: *const f64,
    initial_len: usize,
    out: *mut *mut BetlabMdp,
) -> BetlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kernel = slice(kernel, kernel_len, "kernel")?.to_vec();
        let initial = slice(initial, initial_len, "initial")?.to_vec();
        let mdp = FiniteMdp::new(n_states, n_actions, kernel, initial).map_err(lab)?;
        mdp.validate().map_err(lab)?;
        write(out, Box::into_raw(Box::new(BetlabMdp { inner: mdp })), "out")
    })
}

/// Random MDP with Dirichlet(1) rows, seeded.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_mdp_random(
    n_states: usize,
    n_actions: usize,
    seed: u64,
    out: *mut *mut BetlabMdp,
) -> BetlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = FiniteMdp::random(n_states, n_actions, &mut rng).map_err(lab)?;
        write(out, Box::into_raw(Box::new(BetlabMdp { inner: mdp })), "out")
    })
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn betlab_mdp_n_states(mdp: *const BetlabMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.inner.n_states())
}

/// Number of actions, or 0 for a null handle.
///
/// # Safety
/// `mdp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn betlab_mdp_n_actions(mdp: *const BetlabMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.inner.n_actions())
}

/// `P[s][a][s_next]`.
///
/// # Safety
/// `mdp` must be null or a live handle; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_mdp_prob(
    mdp: *const BetlabMdp,
    s: usize,
    a: usize,
    s_next: usize,
    out: *mut f64,
) -> BetlabStatus {
    guard(|| {
        let m = &mdp.as_ref().ok_or_else(|| null("mdp"))?.inner;
        if s >= m.n_states() || a >= m.n_actions() || s_next >= m.n_states() {
            return Err(lab(LabError::Domain(format!("index ({s}, {a}, {s_next}) out of range"))));
        }
        write(out, m.prob(s, a, s_next), "out")
    })
}

/// Releases an MDP handle; null is ignored.
///
/// # Safety
/// `mdp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn betlab_mdp_free(mdp: *mut BetlabMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Transition-error bound check for the optimal bettor with branch noise
/// `epsilon`, `n` attempts per goal and margin threshold `gamma`.
///
/// # Safety
/// `mdp` must be null or a live handle; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_verify_thm1(
    mdp: *const BetlabMdp,
    epsilon: f64,
    n: u64,
    gamma: f64,
    out: *mut BetlabReport,
) -> BetlabStatus {
    guard(|| {
        let m = &mdp.as_ref().ok_or_else(|| null("mdp"))?.inner;
        let policy = noisy_policy(epsilon, optimal_policy()).map_err(lab)?;
        let r = verify_thm1(m, &policy, n, gamma).map_err(lab)?;
        let value = BetlabReport {
            lhs: r.lhs,
            rhs: r.rhs,
            slack: r.slack,
            delta_bar: r.inputs.delta_bar.unwrap_or(f64::NAN),
            satisfied: r.satisfied,
            vacuous: r.vacuous,
            n_flags: r.assumption_flags.len(),
        };
        write(out, value, "out")
    })
}

/// Builds a POMDP from row-major `[x][a][x']` transitions, `[x][o]`
/// observations and an initial distribution. Rows must be stochastic.
///
/// # Safety
/// Each table pointer must be readable for its length; `out` must be null or
/// valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn betlab_pomdp_new(
    n_latent: usize,
    n_actions: usize,
    n_obs: usize,
    transition: *const f64,
    transition_len: usize,
    observation: *const f64,
    observation_len: usize,
    initial: *const f64,
    initial_len: usize,
    out: *mut *mut BetlabPomdp,
) -> BetlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pomdp = FinitePomdp::new(
            n_latent,
            n_actions,
            n_obs,
            slice(transition, transition_len, "transition")?.to_vec(),
            slice(observation, observation_len, "observation")?.to_vec(),
            slice(initial, initial_len, "initial")?.to_vec(),
        )
        .map_err(lab)?;
        pomdp.validate().map_err(lab)?;
        write(out, Box::into_raw(Box::new(BetlabPomdp { inner: pomdp })), "out")
    })
}

/// The cue/alias environment whose cue predicts the hidden bit with
/// probability `bias`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn betlab_pomdp_cue_alias(bias: f64, out: *mut *mut BetlabPomdp) -> BetlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pomdp = cue_alias_environment(bias).map_err(lab)?;
        write(out, Box::into_raw(Box::new(BetlabPomdp { inner: pomdp })), "out")
    })
}

/// Releases a POMDP handle; null is ignored.
///
/// # Safety
/// `pomdp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn betlab_pomdp_free(pomdp: *mut BetlabPomdp) {
    if !pomdp.is_null() {
        drop(Box::from_raw(pomdp));
    }
}

/// Exact probability that a test succeeds after a history.
///
/// The history has `n_history_obs` observations and one fewer actions. The
/// test runs `depth` actions; its event is `n_events` observation sequences
/// of length `depth`, concatenated in `events`.
///
/// # Safety
/// Every array must be readable for the length implied above; `out` must be
/// null or valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn betlab_test_probability(
    pomdp: *const BetlabPomdp,
    history_obs: *const usize,
    n_history_obs: usize,
    history_actions: *const usize,
    test_actions: *const usize,
    depth: usize,
    events: *const usize,
    n_events: usize,
    out: *mut f64,
) -> BetlabStatus {
    guard(|| {
        let p = &pomdp.as_ref().ok_or_else(|| null("pomdp"))?.inner;
        let obs = slice(history_obs, n_history_obs, "history_obs")?.to_vec();
        let acts = slice(history_actions, n_history_obs.saturating_sub(1), "history_actions")?.to_vec();
        let h = History::new(obs, acts).map_err(lab)?;
        let actions = slice(test_actions, depth, "test_actions")?.to_vec();
        let flat = slice(events, depth.saturating_mul(n_events), "events")?;
        let event: BTreeSet<Vec<usize>> = if depth == 0 {
            BTreeSet::new()
        } else {
            flat.chunks(depth).map(<[usize]>::to_vec).collect()
        };
        let t = Test::new(actions, event).map_err(lab)?;
        write(out, test_probability(p, &h, &t).map_err(lab)?, "out")
    })
}
