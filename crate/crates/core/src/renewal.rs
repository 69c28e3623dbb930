//! Effective capacity of renewal processes paying a constant reward per renewal.
//!
//! With i.i.d. integer interarrival times `X` (pmf `q_k`, `k = 0..K`) and a
//! reward `R` at every renewal, the effective capacity at QoS exponent `θ`
//! is `ln ζ / θ`, where `ζ ≥ 1` is the unique root of
//!
//! ```text
//! Σ_k q_k ζ^k = e^{θR},      ζ ∈ [1, e^{θR/E(X)}]
//! ```
//!
//! The root is found by bisection on `u = ln ζ` so that neither `ζ^k` nor
//! `e^{θR}` has to be formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect_increasing, central_difference, ExpTerms, NeumaierSum};

/// Tolerance on `Σ q_k = 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Probability mass function of an integer interarrival time.
///
/// `probs[k] = Pr(X = k)` for `k = 0..=K`; trailing zeros are trimmed so
/// `probs[K] > 0`. Probabilities are renormalised to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InterarrivalPmf {
    probs: Vec<f64>,
}

impl InterarrivalPmf {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        for (k, &q) in probs.iter().enumerate() {
            if !(0.0..=1.0 + PROBABILITY_SUM_TOLERANCE).contains(&q) {
                return Err(Error::InvalidPmf(format!("q[{k}] = {q} is not in [0, 1]")));
            }
        }
        while probs.last() == Some(&0.0) {
            probs.pop();
        }
        let total = probs.iter().copied().collect::<NeumaierSum>().value();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidPmf(format!("probabilities sum to {total}")));
        }
        if probs.len() < 2 {
            return Err(Error::InvalidPmf(
                "mean interarrival must be positive (q0 < 1)".into(),
            ));
        }
        for q in &mut probs {
            *q /= total;
        }
        Ok(InterarrivalPmf { probs })
    }

    /// Builds a pmf from sparse `(k, q_k)` pairs; unlisted `k` get zero.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let max_k = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        let mut probs = vec![0.0; max_k + 1];
        for &(k, q) in pairs {
            if probs[k] != 0.0 {
                return Err(Error::InvalidPmf(format!("interarrival {k} listed twice")));
            }
            probs[k] = q;
        }
        Self::new(probs)
    }

    /// Point mass at `k ≥ 1`.
    pub fn deterministic(k: usize) -> Result<Self> {
        Self::from_pairs(&[(k, 1.0)])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `q_k`, zero outside the support.
    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Largest interarrival with positive mass, `K`.
    pub fn max_interarrival(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn moments(&self) -> (f64, f64) {
        pmf_moments(self)
    }

    pub(crate) fn exp_terms(&self, reward: f64) -> ExpTerms {
        let support: Vec<usize> = (0..self.probs.len())
            .filter(|&k| self.probs[k] > 0.0)
            .collect();
        ExpTerms::new(
            support.iter().map(|&k| self.probs[k]).collect(),
            support.iter().map(|&k| k as f64).collect(),
            vec![reward; support.len()],
        )
    }
}

impl TryFrom<Vec<f64>> for InterarrivalPmf {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<InterarrivalPmf> for Vec<f64> {
    fn from(pmf: InterarrivalPmf) -> Self {
        pmf.probs
    }
}

/// Everything the analysis reports at one QoS exponent.
///
/// `zeta` may overflow to `+inf` for very large `θ`; `log_zeta` is the
/// authoritative value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcResult {
    pub theta: f64,
    pub zeta: f64,
    pub log_zeta: f64,
    pub capacity: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub approx_small_theta: f64,
    pub ltat: f64,
}

impl EcResult {
    /// Re-expresses a result computed on a lattice whose tick is `tick`
    /// time units: rates are divided by `tick`, `ln ζ` per unit time too.
    pub fn per_unit_time(mut self, tick: f64) -> Self {
        self.log_zeta /= tick;
        self.zeta = self.log_zeta.exp();
        self.capacity /= tick;
        self.lower_bound /= tick;
        self.upper_bound /= tick;
        self.approx_small_theta /= tick;
        self.ltat /= tick;
        self
    }
}

/// `(E(X), Var(X))` by exact finite sums.
pub fn pmf_moments(pmf: &InterarrivalPmf) -> (f64, f64) {
    let mut mean = NeumaierSum::default();
    let mut second = NeumaierSum::default();
    for (k, &q) in pmf.probs.iter().enumerate() {
        let k = k as f64;
        mean.add(k * q);
        second.add(k * k * q);
    }
    let mean = mean.value();
    (mean, (second.value() - mean * mean).max(0.0))
}

fn check_reward_theta(reward: f64, theta: f64) -> Result<()> {
    if !(reward.is_finite() && reward > 0.0) {
        return Err(Error::param(
            "reward",
            format!("{reward} must be finite and positive"),
        ));
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::param(
            "theta",
            format!("{theta} must be finite and non-negative"),
        ));
    }
    Ok(())
}

/// `u = ln ζ` for the constant-reward root equation.
pub fn solve_log_zeta_constant(pmf: &InterarrivalPmf, reward: f64, theta: f64) -> Result<f64> {
    check_reward_theta(reward, theta)?;
    Ok(pmf.exp_terms(reward).solve(theta)?.log_zeta)
}

/// The spectral root `ζ` of `Σ q_k ζ^k = e^{θR}`.
pub fn solve_zeta_constant(pmf: &InterarrivalPmf, reward: f64, theta: f64) -> Result<f64> {
    solve_log_zeta_constant(pmf, reward, theta).map(f64::exp)
}

/// Two-term small-θ expansion `R/E(X) − θR²Var(X)/(2E(X)³)`.
pub fn approx_constant(pmf: &InterarrivalPmf, reward: f64, theta: f64) -> f64 {
    let (mean, var) = pmf_moments(pmf);
    reward / mean - theta * reward * reward * var / (2.0 * mean.powi(3))
}

/// `R/K ≤ C_e ≤ min(R/K − ln q_K/(Kθ), R/E(X))`.
pub fn bounds_constant(pmf: &InterarrivalPmf, reward: f64, theta: f64) -> (f64, f64) {
    let k_max = pmf.max_interarrival() as f64;
    let q_k = pmf.prob(pmf.max_interarrival());
    let (mean, _) = pmf_moments(pmf);
    let lower = reward / k_max;
    let slack = tail_slack(q_k, k_max, theta);
    (lower, (lower + slack).min(reward / mean))
}

/// `−ln q / (k θ)`, with the `θ = 0` and `q = 1` edge cases resolved.
pub(crate) fn tail_slack(q: f64, k: f64, theta: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else if theta == 0.0 {
        f64::INFINITY
    } else {
        -q.ln() / (k * theta)
    }
}

/// Exact effective capacity with bounds, approximation and LTAT filled in.
/// At `θ = 0` the capacity is the continuity limit `R/E(X)`.
pub fn effective_capacity_constant(
    pmf: &InterarrivalPmf,
    reward: f64,
    theta: f64,
) -> Result<EcResult> {
    let log_zeta = solve_log_zeta_constant(pmf, reward, theta)?;
    let (mean, _) = pmf_moments(pmf);
    let ltat = reward / mean;
    let capacity = if theta == 0.0 { ltat } else { log_zeta / theta };
    let (lower_bound, upper_bound) = bounds_constant(pmf, reward, theta);
    Ok(EcResult {
        theta,
        zeta: log_zeta.exp(),
        log_zeta,
        capacity,
        lower_bound,
        upper_bound,
        approx_small_theta: approx_constant(pmf, reward, theta),
        ltat,
    })
}

/// Root of `E(ζ^X) = e^{θR}` for a continuous interarrival time, given its
/// cumulant generating function `u ↦ ln E(e^{uX})`.
///
/// `mean` is `E(X)`; when `None` it is taken as the central-difference
/// derivative of the cumulant at zero. The evaluator may return `+inf`
/// past the abscissa of convergence of the mgf.
pub fn solve_zeta_continuous<F>(
    cumulant: F,
    reward: f64,
    theta: f64,
    mean: Option<f64>,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    check_reward_theta(reward, theta)?;
    if theta == 0.0 {
        return Ok(1.0);
    }
    let mean = mean.unwrap_or_else(|| central_difference(&cumulant, 0.0, 1e-6));
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::param(
            "mean",
            format!("E(X) = {mean} must be positive"),
        ));
    }
    let target = theta * reward;
    let root = bisect_increasing(
        |u| cumulant(u) - target,
        target / mean,
        crate::numeric::LOG_ZETA_TOLERANCE,
    )?;
    Ok(root.log_zeta.exp())
}
