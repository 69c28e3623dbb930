//! Small numerical kernels shared by the solvers and estimators.

use crate::error::{Error, Result};

/// Iteration cap for every bisection in the crate.
pub const MAX_BISECTION_ITERATIONS: usize = 200;
/// Absolute tolerance on `u = ln ζ`. Bisection usually runs past this
/// to full double precision; the cap only matters for absurd brackets.
pub const LOG_ZETA_TOLERANCE: f64 = 1e-12;
/// How many times a numerically-too-tight upper bracket may be doubled.
pub const MAX_BRACKET_EXPANSIONS: u32 = 60;

/// Result of a monotone root search in `u = ln ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRoot {
    pub log_zeta: f64,
    pub iterations: usize,
    /// Number of times the analytic upper end had to be doubled.
    pub bracket_expansions: u32,
}

/// `ln Σ exp(xᵢ)`, stable for large magnitudes. Returns `-inf` for an
/// empty input or when every term is `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = NeumaierSum::default();
    for t in terms {
        acc.add((t - max).exp());
    }
    max + acc.value().ln()
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Pairwise sum over a fixed order. The tree shape depends only on the
/// slice length, so equal inputs give bit-identical output.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// The weighted exponential sum `Σ qᵢ exp(xᵢ u − θ rᵢ)` that every
/// discrete root equation in this crate reduces to.
///
/// `xᵢ` are interarrival times, `rᵢ` rewards, and `qᵢ` probabilities
/// normalised to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ExpTerms {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    times: Vec<f64>,
    rewards: Vec<f64>,
}

impl ExpTerms {
    pub(crate) fn new(weights: Vec<f64>, times: Vec<f64>, rewards: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), times.len());
        debug_assert_eq!(weights.len(), rewards.len());
        let log_weights = weights.iter().map(|q| q.ln()).collect();
        ExpTerms {
            weights,
            log_weights,
            times,
            rewards,
        }
    }

    pub(crate) fn mean_time(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.times)
            .map(|(q, x)| q * x)
            .collect::<NeumaierSum>()
            .value()
    }

    pub(crate) fn mean_reward(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.rewards)
            .map(|(q, r)| q * r)
            .collect::<NeumaierSum>()
            .value()
    }

    pub(crate) fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    /// `ln Σ qᵢ exp(xᵢ u − θ rᵢ)`.
    ///
    /// Near the origin the `ln1p(Σ qᵢ expm1(·))` form keeps full relative
    /// precision, which small-θ capacities depend on.
    pub(crate) fn log_mgf(&self, theta: f64, u: f64) -> f64 {
        let exponent = |i: usize| self.times[i] * u - theta * self.rewards[i];
        let max_abs = (0..self.weights.len())
            .map(|i| exponent(i).abs())
            .fold(0.0, f64::max);
        if max_abs <= 0.5 {
            let s: NeumaierSum = (0..self.weights.len())
                .map(|i| self.weights[i] * exponent(i).exp_m1())
                .collect();
            s.value().ln_1p()
        } else {
            log_sum_exp((0..self.weights.len()).map(|i| self.log_weights[i] + exponent(i)))
        }
    }

    /// Solves `ln Σ qᵢ exp(xᵢ u − θ rᵢ) = 0` for `u ≥ 0` on the Jensen
    /// bracket `[0, θ E(r)/E(x)]`.
    pub(crate) fn solve(&self, theta: f64) -> Result<LogRoot> {
        let mean_reward = self.mean_reward();
        if theta == 0.0 || mean_reward == 0.0 {
            return Ok(LogRoot {
                log_zeta: 0.0,
                iterations: 0,
                bracket_expansions: 0,
            });
        }
        let upper = theta * mean_reward / self.mean_time();
        // Scaled by 1/max xᵢ, the slope bound of the log-mgf.
        let tol = LOG_ZETA_TOLERANCE / self.max_time().max(1.0);
        bisect_increasing(|u| self.log_mgf(theta, u), upper, tol)
    }
}

/// Bisection for the root of an increasing function on `[0, upper]`,
/// given `f(0) ≤ 0`.
///
/// `+inf` is accepted as "above the root" (an mgf past its abscissa of
/// convergence); NaN or `-inf` are reported as [`Error::EvaluatorDiverged`].
/// If `f(upper) < 0` because of roundoff the bracket is doubled, at most
/// [`MAX_BRACKET_EXPANSIONS`] times.
pub(crate) fn bisect_increasing<F>(mut f: F, upper: f64, tol: f64) -> Result<LogRoot>
where
    F: FnMut(f64) -> f64,
{
    let mut eval = |u: f64| -> Result<f64> {
        let v = f(u);
        if v.is_nan() || v == f64::NEG_INFINITY {
            Err(Error::EvaluatorDiverged { at: u, value: v })
        } else {
            Ok(v)
        }
    };

    let f_lo = eval(0.0)?;
    if f_lo >= 0.0 {
        return Ok(LogRoot {
            log_zeta: 0.0,
            iterations: 0,
            bracket_expansions: 0,
        });
    }

    let mut hi = upper;
    let mut f_hi = eval(hi)?;
    let mut expansions = 0;
    while f_hi < 0.0 {
        if expansions == MAX_BRACKET_EXPANSIONS {
            return Err(Error::NonConvergence {
                iterations: 0,
                width: hi,
            });
        }
        hi = if hi > 0.0 {
            2.0 * hi
        } else {
            f64::MIN_POSITIVE
        };
        f_hi = eval(hi)?;
        expansions += 1;
    }

    let mut lo = 0.0;
    let mut f_lo = f_lo;
    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERATIONS {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let fm = eval(mid)?;
        if fm == 0.0 {
            return Ok(LogRoot {
                log_zeta: mid,
                iterations,
                bracket_expansions: expansions,
            });
        }
        if fm < 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    if iterations == MAX_BISECTION_ITERATIONS && hi - lo > tol {
        return Err(Error::NonConvergence {
            iterations,
            width: hi - lo,
        });
    }
    let log_zeta = if f_hi.is_finite() && f_hi < -f_lo {
        hi
    } else {
        lo
    };
    Ok(LogRoot {
        log_zeta,
        iterations,
        bracket_expansions: expansions,
    })
}

/// Central-difference derivative with step `h`.
pub(crate) fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
