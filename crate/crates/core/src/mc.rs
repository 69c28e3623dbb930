//! Seeded Monte Carlo estimation of HARQ outage processes and of the
//! finite-time mgf `E[e^{−θS_t}]`.
//!
//! Episode `i` draws from ChaCha8 stream `i` under the run's seed, so every
//! episode is a pure function of `(seed, i)`. Integer tallies are reduced
//! by exact addition and floating-point sums by a fixed-shape tree over
//! fixed-size blocks, so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harq::{reward_table_outage, HarqConfig, HarqTable, OutageCurve, Scheme};
use crate::numeric::pairwise_sum;
use crate::renewal::EcResult;
use crate::reward::RewardTable;

/// Episodes per reduction block.
const BLOCK: u64 = 4096;
/// Number of jackknife batches.
pub const JACKKNIFE_BATCHES: u64 = 64;
/// Relative standard error above which an estimate carries a warning.
pub const VARIANCE_WARNING_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McParams {
    pub samples: u64,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
}

impl McParams {
    pub fn new(samples: u64, seed: u64) -> Self {
        McParams {
            samples,
            seed,
            workers: 0,
        }
    }

    fn check(&self) -> Result<()> {
        if self.samples == 0 {
            Err(Error::param("samples", "must be at least 1"))
        } else {
            Ok(())
        }
    }

    pub(crate) fn run<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
        {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    /// Set when `stderr / mean > 0.1`.
    pub variance_warning: bool,
}

impl McEstimate {
    fn new(mean: f64, stderr: f64, n: u64, seed: u64) -> Self {
        McEstimate {
            mean,
            stderr,
            n,
            seed,
            variance_warning: stderr > VARIANCE_WARNING_RATIO * mean.abs(),
        }
    }
}

/// The random stream of one episode.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Outcome of one HARQ packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Rounds used, `1..=K`.
    pub rounds: usize,
    pub success: bool,
    /// `Σ_{l≤k} log₂(1 + γ_l)` for every `k = 1..=K`.
    pub mutual_info: Vec<f64>,
}

enum GainSampler {
    Exponential(f64),
    Gamma(Gamma<f64>),
}

impl GainSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            GainSampler::Exponential(omega) => -omega * (1.0 - rng.random::<f64>()).ln(),
            GainSampler::Gamma(g) => g.sample(rng),
        }
    }
}

/// Per-configuration constants of the episode simulator.
struct Simulator {
    scheme: Scheme,
    snr: f64,
    gains: Vec<GainSampler>,
    rates: Vec<f64>,
    /// TypeI/CC: SNR threshold `2^R − 1`; XP: cumulative rate targets.
    targets: Vec<f64>,
}

impl Simulator {
    fn new(config: &HarqConfig) -> Result<Self> {
        config.validate()?;
        let gains = config
            .fading
            .iter()
            .map(|f| {
                if f.m == 1.0 {
                    Ok(GainSampler::Exponential(f.omega))
                } else {
                    Gamma::new(f.m, f.omega / f.m)
                        .map(GainSampler::Gamma)
                        .map_err(|e| Error::param("fading", e.to_string()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let k = config.max_rounds;
        let rates: Vec<f64> = (0..k).map(|l| config.rate(l)).collect();
        let targets = match config.scheme {
            Scheme::Xp => rates
                .iter()
                .scan(0.0, |acc, r| {
                    *acc += r;
                    Some(*acc)
                })
                .collect(),
            _ => vec![rates[0].exp2() - 1.0; k],
        };
        Ok(Simulator {
            scheme: config.scheme,
            snr: config.snr_linear(),
            gains,
            rates,
            targets,
        })
    }

    fn max_rounds(&self) -> usize {
        self.gains.len()
    }

    /// Draws all `K` gains, then returns the first round at which the
    /// decoding condition holds, or `None`.
    fn run<R: Rng + ?Sized>(&self, rng: &mut R, snrs: &mut [f64]) -> Option<usize> {
        for (s, g) in snrs.iter_mut().zip(&self.gains) {
            *s = self.snr * g.sample(rng);
        }
        let mut acc = 0.0;
        for (l, &s) in snrs.iter().enumerate() {
            let decoded = match self.scheme {
                Scheme::TypeI => s > self.targets[l],
                Scheme::Cc => {
                    acc += s;
                    acc > self.targets[l]
                }
                Scheme::Ir => {
                    acc += s.log2_1p();
                    acc > self.rates[0]
                }
                Scheme::Vr => {
                    acc += s.log2_1p() / self.rates[l];
                    acc >= 1.0
                }
                Scheme::Xp => {
                    acc += s.log2_1p();
                    acc >= self.targets[l]
                }
            };
            if decoded {
                return Some(l + 1);
            }
        }
        None
    }
}

/// Simulates one packet.
pub fn sample_episode<R: Rng + ?Sized>(config: &HarqConfig, rng: &mut R) -> Result<Episode> {
    let sim = Simulator::new(config)?;
    let mut snrs = vec![0.0; sim.max_rounds()];
    let outcome = sim.run(rng, &mut snrs);
    let mutual_info = snrs
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.log2_1p();
            Some(*acc)
        })
        .collect();
    Ok(Episode {
        rounds: outcome.unwrap_or(sim.max_rounds()),
        success: outcome.is_some(),
        mutual_info,
    })
}

trait Log21p {
    fn log2_1p(self) -> f64;
}

impl Log21p for f64 {
    fn log2_1p(self) -> f64 {
        self.ln_1p() / std::f64::consts::LN_2
    }
}

/// Tallies of episode outcomes: index `k−1` counts successes at round `k`,
/// index `K` counts failures.
fn tally(sim: &Simulator, base: &ChaCha8Rng, range: std::ops::Range<u64>) -> Vec<u64> {
    let k = sim.max_rounds();
    let mut counts = vec![0u64; k + 1];
    let mut snrs = vec![0.0; k];
    for i in range {
        let mut rng = base.clone();
        rng.set_stream(i);
        match sim.run(&mut rng, &mut snrs) {
            Some(round) => counts[round - 1] += 1,
            None => counts[k] += 1,
        }
    }
    counts
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// An outage process estimated from simulated episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTable {
    pub curve: OutageCurve,
    pub table: HarqTable,
    /// Standard error of each table entry's probability, in table order.
    pub entry_stderr: Vec<f64>,
    pub n: u64,
    pub seed: u64,
    /// Outcome tallies of each jackknife batch.
    pub batch_counts: Vec<Vec<u64>>,
}

fn curve_from_counts(counts: &[u64]) -> Result<OutageCurve> {
    let k = counts.len() - 1;
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let mut remaining = n;
    let mut p = vec![1.0];
    let mut se = vec![0.0];
    for &c in &counts[..k] {
        remaining -= c;
        let pk = remaining as f64 / nf;
        p.push(pk);
        se.push((pk * (1.0 - pk) / nf).sqrt());
    }
    OutageCurve::with_stderr(p, se)
}

/// Estimates the outage curve and the scheme's reward table from `n`
/// episodes.
pub fn estimate_reward_table(config: &HarqConfig, params: &McParams) -> Result<McTable> {
    params.run(|| estimate_in_current_pool(config, params))
}

pub(crate) fn estimate_in_current_pool(config: &HarqConfig, params: &McParams) -> Result<McTable> {
    params.check()?;
    let sim = Simulator::new(config)?;
    let n = params.samples;
    let batches = JACKKNIFE_BATCHES.min(n);
    let seed = params.seed;
    let base = episode_rng(seed, 0);
    let batch_counts: Vec<Vec<u64>> = {
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let (lo, hi) = (b * n / batches, (b + 1) * n / batches);
                let blocks: Vec<u64> = (lo..hi).step_by(BLOCK as usize).collect();
                blocks
                    .into_par_iter()
                    .map(|start| tally(&sim, &base, start..(start + BLOCK).min(hi)))
                    .reduce(|| vec![0; sim.max_rounds() + 1], add_counts)
            })
            .collect()
    };
    let counts = batch_counts
        .iter()
        .cloned()
        .reduce(add_counts)
        .expect("at least one batch");
    let curve = curve_from_counts(&counts)?;
    let table = reward_table_outage(&curve, &config.rates, config.scheme)?;
    let entry_stderr = table
        .table
        .entries()
        .iter()
        .map(|e| (e.prob * (1.0 - e.prob) / n as f64).sqrt())
        .collect();
    Ok(McTable {
        curve,
        table,
        entry_stderr,
        n,
        seed,
        batch_counts,
    })
}

impl McTable {
    pub fn effective_capacity(&self, theta: f64) -> Result<EcResult> {
        self.table.effective_capacity(theta)
    }

    /// Capacity at the scheme's normalized exponent with a leave-one-batch-out
    /// jackknife standard error.
    pub fn capacity_estimate(&self, config: &HarqConfig, theta: f64) -> Result<McEstimate> {
        self.jackknife(|curve| {
            reward_table_outage(curve, &config.rates, config.scheme)?
                .effective_capacity(theta)
                .map(|ec| ec.capacity)
        })
    }

    /// `statistic` of the estimated outage curve with a leave-one-batch-out
    /// jackknife standard error.
    pub fn jackknife<F>(&self, statistic: F) -> Result<McEstimate>
    where
        F: Fn(&OutageCurve) -> Result<f64>,
    {
        let mean = statistic(&self.curve)?;
        let total = self
            .batch_counts
            .iter()
            .cloned()
            .reduce(add_counts)
            .expect("at least one batch");
        let b = self.batch_counts.len();
        if b < 2 {
            return Ok(McEstimate::new(mean, 0.0, self.n, self.seed));
        }
        let mut loo = Vec::with_capacity(b);
        for batch in &self.batch_counts {
            let rest: Vec<u64> = total.iter().zip(batch).map(|(t, x)| t - x).collect();
            loo.push(statistic(&curve_from_counts(&rest)?)?);
        }
        let bar = loo.iter().sum::<f64>() / b as f64;
        let ss: f64 = loo.iter().map(|c| (c - bar).powi(2)).sum();
        let stderr = ((b as f64 - 1.0) / b as f64 * ss).sqrt();
        Ok(McEstimate::new(mean, stderr, self.n, self.seed))
    }
}

/// Total reward of completed renewals by time `t` on one simulated path.
fn path_reward<R: Rng + ?Sized>(cdf: &[f64], table: &RewardTable, t: usize, rng: &mut R) -> f64 {
    let entries = table.entries();
    let mut time = 0usize;
    let mut reward = 0.0;
    loop {
        let u: f64 = rng.random();
        let i = cdf.partition_point(|&c| c <= u).min(entries.len() - 1);
        time += entries[i].interarrival;
        if time > t {
            return reward;
        }
        reward += entries[i].reward;
    }
}

/// Direct simulation of `φ(t) = E[e^{−θS_t}]` over `n` independent paths.
pub fn estimate_mgf_finite(
    table: &RewardTable,
    theta: f64,
    t: usize,
    params: &McParams,
) -> Result<McEstimate> {
    params.check()?;
    if t == 0 {
        return Err(Error::param("t", "must be at least 1"));
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::param(
            "theta",
            format!("{theta} must be finite and non-negative"),
        ));
    }
    let mut acc = 0.0;
    let cdf: Vec<f64> = table
        .entries()
        .iter()
        .map(|e| {
            acc += e.prob;
            acc
        })
        .collect();
    let seed = params.seed;
    let n = params.samples;
    let sample = |i: u64| (-theta * path_reward(&cdf, table, t, &mut episode_rng(seed, i))).exp();
    // Sums run over deviations from the first sample.
    let shift = sample(0);
    let blocks: Vec<(f64, f64)> = params.run(|| {
        (0..n.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let d: Vec<f64> = (b * BLOCK..((b + 1) * BLOCK).min(n))
                    .map(|i| sample(i) - shift)
                    .collect();
                let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
                (pairwise_sum(&d), pairwise_sum(&sq))
            })
            .collect()
    });
    let sum = pairwise_sum(&blocks.iter().map(|b| b.0).collect::<Vec<_>>());
    let sum_sq = pairwise_sum(&blocks.iter().map(|b| b.1).collect::<Vec<_>>());
    let nf = n as f64;
    let mean_d = sum / nf;
    let stderr = if n > 1 {
        ((sum_sq - nf * mean_d * mean_d).max(0.0) / (nf - 1.0) / nf).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate::new(shift + mean_d, stderr, n, seed))
}
