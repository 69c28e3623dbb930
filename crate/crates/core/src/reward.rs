//! Renewal reward processes whose reward depends on the interarrival time
//! and a termination state.
//!
//! Every entry `(k, s, q, R)` contributes `q e^{−θR} ζ^k` to the root
//! equation `Σ_κ a_κ ζ^κ = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    bisect_increasing, central_difference, ExpTerms, NeumaierSum, LOG_ZETA_TOLERANCE,
};
use crate::renewal::{tail_slack, EcResult, InterarrivalPmf, PROBABILITY_SUM_TOLERANCE};

/// One renewal outcome: interarrival `k` ticks, ending in `state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEntry {
    pub interarrival: usize,
    pub state: String,
    pub prob: f64,
    pub reward: f64,
}

impl RewardEntry {
    pub fn new(interarrival: usize, state: impl Into<String>, prob: f64, reward: f64) -> Self {
        RewardEntry {
            interarrival,
            state: state.into(),
            prob,
            reward,
        }
    }
}

/// Joint law of interarrival time, termination state and reward.
///
/// Zero-probability entries are dropped on construction and the remaining
/// probabilities renormalised; insertion order is otherwise preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RewardEntry>", into = "Vec<RewardEntry>")]
pub struct RewardTable {
    entries: Vec<RewardEntry>,
    max_interarrival: usize,
}

impl RewardTable {
    pub fn new(entries: Vec<RewardEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.interarrival == 0 {
                return Err(Error::InvalidTable(format!(
                    "entry {i}: interarrival must be ≥ 1"
                )));
            }
            if !(0.0..=1.0 + PROBABILITY_SUM_TOLERANCE).contains(&e.prob) {
                return Err(Error::InvalidTable(format!(
                    "entry {i}: probability {} not in [0, 1]",
                    e.prob
                )));
            }
            if !(e.reward.is_finite() && e.reward >= 0.0) {
                return Err(Error::InvalidTable(format!(
                    "entry {i}: reward {} must be finite and ≥ 0",
                    e.reward
                )));
            }
            if entries[..i]
                .iter()
                .any(|o| o.interarrival == e.interarrival && o.state == e.state)
            {
                return Err(Error::InvalidTable(format!(
                    "duplicate entry ({}, {})",
                    e.interarrival, e.state
                )));
            }
        }
        let total = entries
            .iter()
            .map(|e| e.prob)
            .collect::<NeumaierSum>()
            .value();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidTable(format!("probabilities sum to {total}")));
        }
        let entries: Vec<RewardEntry> = entries
            .into_iter()
            .filter(|e| e.prob > 0.0)
            .map(|mut e| {
                e.prob /= total;
                e
            })
            .collect();
        let max_interarrival = entries.iter().map(|e| e.interarrival).max().unwrap_or(0);
        Ok(RewardTable {
            entries,
            max_interarrival,
        })
    }

    /// The constant-reward process: one state `"S"` per support point.
    pub fn from_pmf(pmf: &InterarrivalPmf, reward: f64) -> Result<Self> {
        if pmf.prob(0) > 0.0 {
            return Err(Error::InvalidTable(
                "interarrival 0 has positive mass".into(),
            ));
        }
        Self::new(
            pmf.probs()
                .iter()
                .enumerate()
                .filter(|&(_, &q)| q > 0.0)
                .map(|(k, &q)| RewardEntry::new(k, "S", q, reward))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[RewardEntry] {
        &self.entries
    }

    pub fn max_interarrival(&self) -> usize {
        self.max_interarrival
    }

    /// Marginal pmf of the interarrival time.
    pub fn interarrival_pmf(&self) -> InterarrivalPmf {
        let mut probs = vec![0.0; self.max_interarrival + 1];
        for e in &self.entries {
            probs[e.interarrival] += e.prob;
        }
        InterarrivalPmf::new(probs).expect("table marginals form a valid pmf")
    }

    pub fn mean_interarrival(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.prob * e.interarrival as f64)
            .collect::<NeumaierSum>()
            .value()
    }

    pub fn mean_reward(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.prob * e.reward)
            .collect::<NeumaierSum>()
            .value()
    }

    /// `Pr(X > t)`.
    pub fn survival(&self, t: usize) -> f64 {
        if t == 0 {
            return 1.0;
        }
        self.entries
            .iter()
            .filter(|e| e.interarrival > t)
            .map(|e| e.prob)
            .collect::<NeumaierSum>()
            .value()
    }

    pub(crate) fn exp_terms(&self) -> ExpTerms {
        ExpTerms::new(
            self.entries.iter().map(|e| e.prob).collect(),
            self.entries.iter().map(|e| e.interarrival as f64).collect(),
            self.entries.iter().map(|e| e.reward).collect(),
        )
    }
}

impl TryFrom<Vec<RewardEntry>> for RewardTable {
    type Error = Error;

    fn try_from(entries: Vec<RewardEntry>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<RewardTable> for Vec<RewardEntry> {
    fn from(table: RewardTable) -> Self {
        table.entries
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() && theta >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            "theta",
            format!("{theta} must be finite and non-negative"),
        ))
    }
}

/// `a[κ−1] = Σ_s q_{κ,s} e^{−θR_{κ,s}}` for `κ = 1..=K`.
pub fn coefficients_a(table: &RewardTable, theta: f64) -> Vec<f64> {
    let mut sums = vec![NeumaierSum::default(); table.max_interarrival];
    for e in &table.entries {
        sums[e.interarrival - 1].add(e.prob * (-theta * e.reward).exp());
    }
    sums.iter().map(NeumaierSum::value).collect()
}

/// `ln ζ̃` for the root of `Σ a_κ ζ̃^κ = 1`.
pub fn solve_log_zeta_variable(table: &RewardTable, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(table.exp_terms().solve(theta)?.log_zeta)
}

pub fn solve_zeta_variable(table: &RewardTable, theta: f64) -> Result<f64> {
    solve_log_zeta_variable(table, theta).map(f64::exp)
}

/// `E(ℛ)/E(X)`.
pub fn ltat(table: &RewardTable) -> f64 {
    table.mean_reward() / table.mean_interarrival()
}

/// `E(ℛ)/E(X) − θ E[(ℛE(X) − E(ℛ)X)²] / (2E(X)³)`.
pub fn approx_variable(table: &RewardTable, theta: f64) -> f64 {
    let mean_x = table.mean_interarrival();
    let mean_r = table.mean_reward();
    let cross: NeumaierSum = table
        .entries
        .iter()
        .map(|e| {
            let d = e.reward * mean_x - mean_r * e.interarrival as f64;
            e.prob * d * d
        })
        .collect();
    mean_r / mean_x - theta * cross.value() / (2.0 * mean_x.powi(3))
}

/// The renewal outcome with the smallest reward.
///
/// Ties go to the largest interarrival; the probability is pooled over
/// every state at that interarrival sharing the minimal reward.
fn min_reward_outcome(table: &RewardTable) -> (usize, f64, f64) {
    let min_reward = table
        .entries
        .iter()
        .map(|e| e.reward)
        .fold(f64::INFINITY, f64::min);
    let kappa = table
        .entries
        .iter()
        .filter(|e| e.reward == min_reward)
        .map(|e| e.interarrival)
        .max()
        .expect("table is non-empty");
    let q: f64 = table
        .entries
        .iter()
        .filter(|e| e.reward == min_reward && e.interarrival == kappa)
        .map(|e| e.prob)
        .sum();
    (kappa, q, min_reward)
}

/// `R̂/K ≤ C_e ≤ min(R̂/κ̂ − ln q̂/(κ̂θ), LTAT)` with `(κ̂, R̂, q̂)` the
/// minimal-reward outcome.
pub fn bounds_variable(table: &RewardTable, theta: f64) -> (f64, f64) {
    let (kappa, q, reward) = min_reward_outcome(table);
    let lower = reward / table.max_interarrival as f64;
    let kappa = kappa as f64;
    let upper = reward / kappa + tail_slack(q, kappa, theta);
    (lower, upper.min(ltat(table)))
}

pub fn effective_capacity_variable(table: &RewardTable, theta: f64) -> Result<EcResult> {
    let log_zeta = solve_log_zeta_variable(table, theta)?;
    let ltat = ltat(table);
    let capacity = if theta == 0.0 { ltat } else { log_zeta / theta };
    let (lower_bound, upper_bound) = bounds_variable(table, theta);
    Ok(EcResult {
        theta,
        zeta: log_zeta.exp(),
        log_zeta,
        capacity,
        lower_bound,
        upper_bound,
        approx_small_theta: approx_variable(table, theta),
        ltat,
    })
}

/// Root of `E(e^{−θℛ} ζ^X) = 1` for a continuous joint law, given
/// `(θ, u) ↦ ln E(e^{−θℛ + uX})`.
///
/// `moments` is `(E(X), E(ℛ))`; when `None` both come from central
/// differences of the evaluator at the origin.
pub fn solve_zeta_variable_continuous<F>(
    evaluator: F,
    theta: f64,
    moments: Option<(f64, f64)>,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    check_theta(theta)?;
    if theta == 0.0 {
        return Ok(1.0);
    }
    let (mean_x, mean_r) = moments.unwrap_or_else(|| {
        (
            central_difference(|u| evaluator(0.0, u), 0.0, 1e-6),
            -central_difference(|t| evaluator(t, 0.0), 0.0, 1e-6),
        )
    });
    if !(mean_x.is_finite() && mean_x > 0.0) {
        return Err(Error::param(
            "moments",
            format!("E(X) = {mean_x} must be positive"),
        ));
    }
    if !(mean_r.is_finite() && mean_r >= 0.0) {
        return Err(Error::param(
            "moments",
            format!("E(R) = {mean_r} must be non-negative"),
        ));
    }
    if mean_r == 0.0 {
        return Ok(1.0);
    }
    let root = bisect_increasing(
        |u| evaluator(theta, u),
        theta * mean_r / mean_x,
        LOG_ZETA_TOLERANCE,
    )?;
    Ok(root.log_zeta.exp())
}
