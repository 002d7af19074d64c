//! Scalar machinery shared by every other module: the margin constants
//! `c(γ)` and `t_γ`, the binary-bet regret decomposition, and an exact
//! binomial distribution.
//!
//! Every bound in the crate reduces to [`bet_regret`]: a stochastic choice
//! between two branches with success probabilities `u_L`, `u_R` loses a
//! fraction `w·|u_L − u_R| / max(u_L, u_R)` of the optimal value, where `w`
//! is the probability placed on the worse branch.

use serde::{Deserialize, Serialize};

use crate::error::{domain, LabError, Result};

/// Slack used when comparing a margin against a threshold γ, so that values
/// such as `0.5 - 0.2` are not excluded from `m ≥ 0.3` by rounding.
pub const MARGIN_TOL: f64 = 1e-12;

/// `4m / (1 + 2m)`: the regret paid per unit of wrong-branch mass on a fair
/// bet with margin `m`. Strictly increasing on `[0, 1/2]`, equal to 1 at 1/2.
pub fn margin_factor(m: f64) -> f64 {
    4.0 * m / (1.0 + 2.0 * m)
}

/// The pair `(c(γ), t_γ)` for a margin threshold γ ∈ (0, 1/2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConstants {
    pub gamma: f64,
    /// `c(γ) = 4γ / (1 + 2γ)`.
    pub c_gamma: f64,
    /// `t_γ = sqrt((1 + 2γ) / (1 − 2γ))`; `None` is the infinity marker and
    /// occurs exactly at γ = 1/2.
    pub t_gamma: Option<f64>,
}

impl MarginConstants {
    /// True when `t_γ` is infinite, which makes every Chebyshev-based bound
    /// vacuous.
    pub fn t_is_infinite(&self) -> bool {
        self.t_gamma.is_none()
    }
}

pub fn margin_constants(gamma: f64) -> Result<MarginConstants> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return domain(format!("gamma must lie in (0, 1/2], got {gamma}"));
    }
    let t_gamma = if gamma == 0.5 {
        None
    } else {
        Some(((1.0 + 2.0 * gamma) / (1.0 - 2.0 * gamma)).sqrt())
    };
    Ok(MarginConstants {
        gamma,
        c_gamma: margin_factor(gamma),
        t_gamma,
    })
}

/// Outcome of a stochastic binary choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetOutcome {
    pub value_pi: f64,
    pub value_star: f64,
    /// Normalized regret `1 − V^π / V★`.
    pub regret: f64,
    /// Probability placed on the suboptimal branch (ties: branch L is optimal).
    pub wrong_mass: f64,
    /// `|u_L − u_R| / 2`; equals `|u_L − 1/2|` for complementary branches.
    pub margin: f64,
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        domain(format!("{name} must be a probability, got {x}"))
    }
}

/// Evaluates a bet that picks branch L with probability `q`.
///
/// The regret is computed from its definition `1 − V/V★`; the wrong-mass
/// identity is a property checked by the tests, not the route used here.
pub fn bet_regret(u_l: f64, u_r: f64, q: f64) -> Result<BetOutcome> {
    check_probability("u_L", u_l)?;
    check_probability("u_R", u_r)?;
    check_probability("q", q)?;
    let value_star = u_l.max(u_r);
    if value_star <= 0.0 {
        return Err(LabError::Unsatisfiable);
    }
    let value_pi = if u_l == u_r { u_l } else { q * u_l + (1.0 - q) * u_r };
    let regret = (1.0 - value_pi / value_star).clamp(0.0, 1.0);
    let wrong_mass = if u_l >= u_r { 1.0 - q } else { q };
    Ok(BetOutcome {
        value_pi,
        value_star,
        regret,
        wrong_mass,
        margin: (u_l - u_r).abs() / 2.0,
    })
}

/// Upper bound `δ / c(γ)` on wrong-branch mass for a fair bet with margin ≥ γ.
pub fn wrong_mass_bound(delta: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return domain(format!("delta must lie in [0, 1], got {delta}"));
    }
    Ok(delta / margin_constants(gamma)?.c_gamma)
}

/// Largest trial count accepted by the binomial routines.
pub const MAX_BINOMIAL_TRIALS: u64 = 10_000;

/// Exact pmf and cdf of `Bin(n, p)`.
///
/// The pmf is anchored at the mode and extended outward by the ratio
/// recurrence `pmf(j+1)/pmf(j) = (n−j)/(j+1) · p/(1−p)`, then normalized, so
/// no term overflows and the largest terms carry full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Binomial {
    n: u64,
    p: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl Binomial {
    pub fn new(n: u64, p: f64) -> Result<Self> {
        check_probability("p", p)?;
        if n > MAX_BINOMIAL_TRIALS {
            return Err(LabError::CapExceeded {
                what: "binomial trials",
                requested: n as usize,
                cap: MAX_BINOMIAL_TRIALS as usize,
            });
        }
        let len = n as usize + 1;
        let mut pmf = vec![0.0; len];
        if p == 0.0 {
            pmf[0] = 1.0;
        } else if p == 1.0 {
            pmf[len - 1] = 1.0;
        } else {
            let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
            let odds = p / (1.0 - p);
            pmf[mode] = 1.0;
            for j in mode..n as usize {
                pmf[j + 1] = pmf[j] * ((n as usize - j) as f64) / ((j + 1) as f64) * odds;
            }
            for j in (1..=mode).rev() {
                pmf[j - 1] = pmf[j] * (j as f64) / ((n as usize - j + 1) as f64) / odds;
            }
            let total: f64 = pmf.iter().sum();
            for v in &mut pmf {
                *v /= total;
            }
        }
        let mut cdf = Vec::with_capacity(len);
        let mut acc = 0.0;
        for &v in &pmf {
            acc += v;
            cdf.push(acc.min(1.0));
        }
        cdf[len - 1] = 1.0;
        Ok(Self { n, p, pmf, cdf })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.pmf.get(k as usize).copied().unwrap_or(0.0)
    }

    /// `F(k) = Pr[X ≤ k]`.
    pub fn cdf(&self, k: u64) -> Result<f64> {
        self.cdf
            .get(k as usize)
            .copied()
            .ok_or_else(|| LabError::Domain(format!("k = {k} exceeds n = {}", self.n)))
    }

    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf
    }

    /// Lower median `min{k : F(k) ≥ 1/2}`.
    pub fn median(&self) -> u64 {
        self.cdf.iter().position(|&f| f >= 0.5).unwrap_or(self.n as usize) as u64
    }
}

pub fn binom_cdf(n: u64, p: f64, k: u64) -> Result<f64> {
    if k > n {
        return domain(format!("k = {k} exceeds n = {n}"));
    }
    Binomial::new(n, p)?.cdf(k)
}

pub fn binom_median(n: u64, p: f64) -> Result<u64> {
    Ok(Binomial::new(n, p)?.median())
}
