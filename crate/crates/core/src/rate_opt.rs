//! Exhaustive rate search maximizing the outage effective capacity.
//!
//! Schemes are compared at a common per-packet exponent `θ̂ = bθ`; each
//! scheme's own normalized exponent follows from its first-round rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harq::{ec_outage, outage_curve_closed_form, HarqConfig, Scheme};
use crate::mc::{estimate_in_current_pool, McParams};

/// Largest grid [`optimize_rates`] accepts.
pub const GRID_LIMIT: u64 = 1_000_000;
/// Sample multiplier of the refinement stage.
pub const REFINE_FACTOR: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    initial: Vec<f64>,
    subsequent: Vec<f64>,
}

fn quarter_steps(from: f64, to: f64) -> Vec<f64> {
    let n = ((to - from) / 0.25).round() as usize;
    (0..=n).map(|i| from + 0.25 * i as f64).collect()
}

impl RateGrid {
    pub fn new(initial: Vec<f64>, subsequent: Vec<f64>) -> Result<Self> {
        for (name, v) in [("initial", &initial), ("subsequent", &subsequent)] {
            if v.is_empty() {
                return Err(Error::param("grid", format!("{name} rates are empty")));
            }
            if v.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(Error::param(
                    "grid",
                    format!("{name} rates must be finite and ≥ 0"),
                ));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::param(
                    "grid",
                    format!("{name} rates must be strictly increasing"),
                ));
            }
        }
        if initial[0] <= 0.0 {
            return Err(Error::param("grid", "initial rates must be positive"));
        }
        Ok(RateGrid {
            initial,
            subsequent,
        })
    }

    /// `{1.5, 1.75, …, 3.75}` for every round, or `{0, 0.25, …, 3.75}` after
    /// the first round for XP.
    pub fn standard(scheme: Scheme) -> Self {
        let fixed = quarter_steps(1.5, 3.75);
        let subsequent = if scheme == Scheme::Xp {
            quarter_steps(0.0, 3.75)
        } else {
            fixed.clone()
        };
        RateGrid {
            initial: fixed,
            subsequent,
        }
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn subsequent(&self) -> &[f64] {
        &self.subsequent
    }

    /// Number of rate vectors searched for `scheme` with `k` rounds.
    pub fn size(&self, scheme: Scheme, k: usize) -> u128 {
        if scheme.is_fixed_rate() {
            return self.initial.len() as u128;
        }
        let mut n = self.initial.len() as u128;
        for _ in 1..k {
            n = n.saturating_mul(self.subsequent.len() as u128);
        }
        n
    }

    /// Every rate vector, in lexicographic order.
    pub fn vectors(&self, scheme: Scheme, k: usize) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.initial.iter().map(|&r| vec![r]).collect();
        if scheme.is_fixed_rate() {
            return out;
        }
        for _ in 1..k {
            out = out
                .into_iter()
                .flat_map(|v| {
                    self.subsequent.iter().map(move |&r| {
                        let mut w = v.clone();
                        w.push(r);
                        w
                    })
                })
                .collect();
        }
        out
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub rates: Vec<f64>,
    pub capacity: f64,
    /// Jackknife standard error; zero for closed-form outage.
    pub stderr: f64,
    /// Episodes behind the estimate; zero for closed-form outage.
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub best: RatePoint,
    /// All grid points in lexicographic order of their rates.
    pub points: Vec<RatePoint>,
}

/// The scheme's normalized exponent at per-packet exponent `θ̂`.
pub fn scheme_theta(scheme: Scheme, rates: &[f64], theta_hat: f64) -> f64 {
    match scheme {
        Scheme::Vr => theta_hat,
        _ => theta_hat / rates[0],
    }
}

fn has_closed_form(config: &HarqConfig) -> bool {
    match config.scheme {
        Scheme::TypeI => true,
        Scheme::Cc => config.fading.iter().all(|f| *f == config.fading[0]),
        _ => false,
    }
}

fn evaluate_in_pool(config: &HarqConfig, theta_hat: f64, params: &McParams) -> Result<RatePoint> {
    let theta = scheme_theta(config.scheme, &config.rates, theta_hat);
    if has_closed_form(config) {
        let curve = outage_curve_closed_form(config)?;
        return Ok(RatePoint {
            rates: config.rates.clone(),
            capacity: ec_outage(config, &curve, theta)?.capacity,
            stderr: 0.0,
            samples: 0,
        });
    }
    let est = estimate_in_current_pool(config, params)?.capacity_estimate(config, theta)?;
    Ok(RatePoint {
        rates: config.rates.clone(),
        capacity: est.mean,
        stderr: est.stderr,
        samples: est.n,
    })
}

/// Outage effective capacity of `template` with its scheme and rates
/// replaced, at per-packet exponent `θ̂`.
pub fn evaluate_rates(
    scheme: Scheme,
    rates: &[f64],
    template: &HarqConfig,
    theta_hat: f64,
    params: &McParams,
) -> Result<RatePoint> {
    let config = template.with_scheme(scheme, rates.to_vec());
    params.run(|| evaluate_in_pool(&config, theta_hat, params))
}

fn argmax(points: &[RatePoint]) -> usize {
    // Ties keep the lexicographically first point.
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.capacity > points[best].capacity {
            best = i;
        }
    }
    best
}

/// Searches every rate vector of `grid`, sharing `params.seed` across
/// points. Monte Carlo points are first estimated with `params.samples`
/// episodes, then the top tenth is re-estimated with ten times as many.
pub fn optimize_rates(
    scheme: Scheme,
    grid: &RateGrid,
    template: &HarqConfig,
    theta_hat: f64,
    params: &McParams,
) -> Result<Optimum> {
    let k = template.max_rounds;
    let points = grid.size(scheme, k);
    if points > GRID_LIMIT as u128 {
        return Err(Error::GridTooLarge {
            points,
            limit: GRID_LIMIT,
        });
    }
    if !(theta_hat.is_finite() && theta_hat >= 0.0) {
        return Err(Error::param(
            "theta",
            format!("{theta_hat} must be finite and non-negative"),
        ));
    }
    let configs: Vec<HarqConfig> = grid
        .vectors(scheme, k)
        .into_iter()
        .map(|rates| template.with_scheme(scheme, rates))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    params.run(|| {
        let mut evaluated = configs
            .par_iter()
            .map(|c| evaluate_in_pool(c, theta_hat, params))
            .collect::<Result<Vec<_>>>()?;
        if !configs.is_empty() && !has_closed_form(&configs[0]) {
            let mut order: Vec<usize> = (0..evaluated.len()).collect();
            order.sort_by(|&a, &b| {
                evaluated[b]
                    .capacity
                    .total_cmp(&evaluated[a].capacity)
                    .then(a.cmp(&b))
            });
            order.truncate(evaluated.len().div_ceil(10));
            let fine = McParams {
                samples: params.samples.saturating_mul(REFINE_FACTOR),
                ..*params
            };
            let refined = order
                .par_iter()
                .map(|&i| evaluate_in_pool(&configs[i], theta_hat, &fine))
                .collect::<Result<Vec<_>>>()?;
            for (&i, p) in order.iter().zip(refined) {
                evaluated[i] = p;
            }
            // Only refined points compete.
            let mut best = order[0];
            for &i in &order {
                if evaluated[i].capacity > evaluated[best].capacity
                    || (evaluated[i].capacity == evaluated[best].capacity && i < best)
                {
                    best = i;
                }
            }
            return Ok(Optimum {
                best: evaluated[best].clone(),
                points: evaluated,
            });
        }
        let best = argmax(&evaluated);
        Ok(Optimum {
            best: evaluated[best].clone(),
            points: evaluated,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harq::Fading;

    fn template(k: usize, snr_db: f64) -> HarqConfig {
        HarqConfig {
            scheme: Scheme::Ir,
            max_rounds: k,
            rates: vec![2.0],
            snr_db,
            fading: vec![Fading::RAYLEIGH; k],
            packet_bits: Some(1080.0),
            subcodeword_symbols: None,
        }
    }

    #[test]
    fn standard_grids() {
        let g = RateGrid::standard(Scheme::Vr);
        assert_eq!(g.initial().len(), 10);
        assert_eq!(g.initial()[0], 1.5);
        assert_eq!(*g.initial().last().unwrap(), 3.75);
        assert_eq!(g.subsequent(), g.initial());
        let x = RateGrid::standard(Scheme::Xp);
        assert_eq!(x.subsequent().len(), 16);
        assert_eq!(x.subsequent()[0], 0.0);
        assert_eq!(x.size(Scheme::Xp, 2), 160);
        assert_eq!(x.size(Scheme::Ir, 2), 10);
        let v = x.vectors(Scheme::Xp, 2);
        assert_eq!(v[0], vec![1.5, 0.0]);
        assert_eq!(v[1], vec![1.5, 0.25]);
    }

    #[test]
    fn grid_validation() {
        assert!(RateGrid::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(RateGrid::new(vec![2.0, 1.0], vec![1.0]).is_err());
        assert!(RateGrid::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn grid_limit() {
        let g = RateGrid::standard(Scheme::Xp);
        let res = optimize_rates(
            Scheme::Xp,
            &g,
            &template(6, 10.0),
            1e-3,
            &McParams::new(10, 1),
        );
        assert!(matches!(res, Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn perfect_channel_prefers_largest_rate() {
        let g = RateGrid::standard(Scheme::TypeI);
        let opt = optimize_rates(
            Scheme::TypeI,
            &g,
            &template(2, 300.0),
            1e-9,
            &McParams::new(10, 1),
        )
        .unwrap();
        assert_eq!(opt.best.rates, vec![3.75]);
        assert!((opt.best.capacity - 3.75).abs() < 1e-6);
    }

    #[test]
    fn best_is_reproducible() {
        let g = RateGrid::new(vec![1.5, 2.5, 3.5], vec![1.0, 2.0, 3.0]).unwrap();
        let t = template(2, 10.0);
        let params = McParams::new(5000, 17);
        let a = optimize_rates(Scheme::Vr, &g, &t, 1e-3, &params).unwrap();
        let b = optimize_rates(Scheme::Vr, &g, &t, 1e-3, &params).unwrap();
        assert_eq!(a, b);
        let fine = McParams::new(50_000, 17);
        let again = evaluate_rates(Scheme::Vr, &a.best.rates, &t, 1e-3, &fine).unwrap();
        assert_eq!(again.capacity, a.best.capacity);
    }
}
