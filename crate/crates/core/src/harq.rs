//! HARQ schemes as renewal reward processes.
//!
//! A packet is retransmitted for at most `K` rounds; a renewal happens when
//! it is decoded or dropped. Capacities are computed in each scheme's
//! normalized units and come out in bits per channel use:
//!
//! | scheme      | time unit            | reward on success | exponent      |
//! |-------------|----------------------|-------------------|---------------|
//! | TypeI/CC/IR | one round (`L` sym.) | `R`               | `θ̄ = Lθ`      |
//! | VR          | `b` symbols          | 1                 | `θ̂ = bθ`      |
//! | XP          | one round (`L` sym.) | `Σ_{l≤k} R̆_l`     | `θ̆ = Lθ`      |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::renewal::{effective_capacity_constant, EcResult, InterarrivalPmf};
use crate::reward::{effective_capacity_variable, RewardEntry, RewardTable};

/// Slack allowed when checking that an outage curve is non-increasing.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    TypeI,
    Cc,
    Ir,
    Vr,
    Xp,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::TypeI,
        Scheme::Cc,
        Scheme::Ir,
        Scheme::Vr,
        Scheme::Xp,
    ];

    /// TypeI, CC and IR: one fixed rate for every round.
    pub fn is_fixed_rate(self) -> bool {
        matches!(self, Scheme::TypeI | Scheme::Cc | Scheme::Ir)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TypeI => "typei",
            Scheme::Cc => "cc",
            Scheme::Ir => "ir",
            Scheme::Vr => "vr",
            Scheme::Xp => "xp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "typei" | "type1" | "i" => Ok(Scheme::TypeI),
            "cc" => Ok(Scheme::Cc),
            "ir" => Ok(Scheme::Ir),
            "vr" => Ok(Scheme::Vr),
            "xp" => Ok(Scheme::Xp),
            _ => Err(Error::param("scheme", format!("unknown scheme `{s}`"))),
        }
    }
}

/// Nakagami-m fading of one round: channel power gain `α ~ Gamma(m, Ω/m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fading {
    pub m: f64,
    pub omega: f64,
}

impl Fading {
    pub const RAYLEIGH: Fading = Fading { m: 1.0, omega: 1.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqConfig {
    pub scheme: Scheme,
    pub max_rounds: usize,
    /// One rate for TypeI/CC/IR, `K` rates for VR and XP (bits/symbol).
    pub rates: Vec<f64>,
    pub snr_db: f64,
    /// One entry per round.
    pub fading: Vec<Fading>,
    pub packet_bits: Option<f64>,
    pub subcodeword_symbols: Option<f64>,
}

impl HarqConfig {
    /// 20 dB, `R = 4`, `K = 5`, `b = 1080`, i.i.d. unit-power Rayleigh.
    /// VR and XP get rate vectors that reduce to the fixed-rate case.
    pub fn reference_defaults(scheme: Scheme) -> Self {
        let k = 5;
        let rates = match scheme {
            Scheme::Vr => vec![4.0; k],
            Scheme::Xp => {
                let mut r = vec![0.0; k];
                r[0] = 4.0;
                r
            }
            _ => vec![4.0],
        };
        HarqConfig {
            scheme,
            max_rounds: k,
            rates,
            snr_db: 20.0,
            fading: vec![Fading::RAYLEIGH; k],
            packet_bits: Some(1080.0),
            subcodeword_symbols: None,
        }
    }

    /// Same channel, different scheme and rates.
    pub fn with_scheme(&self, scheme: Scheme, rates: Vec<f64>) -> Self {
        HarqConfig {
            scheme,
            rates,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.max_rounds;
        if k == 0 {
            return Err(Error::param("max_rounds", "must be at least 1"));
        }
        if self.fading.len() != k {
            return Err(Error::param(
                "fading",
                format!(
                    "has {} entries, expected max_rounds = {k}",
                    self.fading.len()
                ),
            ));
        }
        for f in &self.fading {
            if !(f.m >= 0.5 && f.m.is_finite()) {
                return Err(Error::param("fading", format!("m = {} must be ≥ 0.5", f.m)));
            }
            if !(f.omega > 0.0 && f.omega.is_finite()) {
                return Err(Error::param(
                    "fading",
                    format!("omega = {} must be positive", f.omega),
                ));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::param("snr_db", "must be finite"));
        }
        let expected = if self.scheme.is_fixed_rate() { 1 } else { k };
        if self.rates.len() != expected {
            return Err(Error::param(
                "rates",
                format!(
                    "{} needs {expected} rate(s), got {}",
                    self.scheme,
                    self.rates.len()
                ),
            ));
        }
        for (l, &r) in self.rates.iter().enumerate() {
            let zero_ok = self.scheme == Scheme::Xp && l > 0;
            if !(r.is_finite() && (r > 0.0 || (zero_ok && r == 0.0))) {
                return Err(Error::param(
                    "rates",
                    format!("rate {r} in round {} is not allowed", l + 1),
                ));
            }
        }
        for (name, v) in [
            ("packet_bits", self.packet_bits),
            ("subcodeword_symbols", self.subcodeword_symbols),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::param(name, format!("{v} must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Linear transmit SNR `γ_T`.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// The rate of round `l` (0-based); fixed-rate schemes repeat their rate.
    pub fn rate(&self, l: usize) -> f64 {
        if self.scheme.is_fixed_rate() {
            self.rates[0]
        } else {
            self.rates[l]
        }
    }

    fn packet_bits(&self) -> Result<f64> {
        self.packet_bits
            .ok_or_else(|| Error::param("packet_bits", "needed for raw-unit conversion"))
    }

    /// Symbols per round `L`; defaults to `b / R₁`.
    fn round_symbols(&self) -> Result<f64> {
        match self.subcodeword_symbols {
            Some(l) => Ok(l),
            None => Ok(self.packet_bits()? / self.rates[0]),
        }
    }

    /// Converts a per-symbol exponent `θ` into the scheme's normalized one.
    pub fn normalized_theta(&self, theta: f64) -> Result<f64> {
        Ok(match self.scheme {
            Scheme::Vr => self.packet_bits()? * theta,
            _ => self.round_symbols()? * theta,
        })
    }
}

/// Outage probabilities `p₀ = 1 ≥ p₁ ≥ … ≥ p_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageCurve {
    p: Vec<f64>,
    stderr: Vec<f64>,
}

impl OutageCurve {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let stderr = vec![0.0; p.len()];
        Self::with_stderr(p, stderr)
    }

    pub fn with_stderr(mut p: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if p.len() < 2 || p[0] != 1.0 {
            return Err(Error::param(
                "outage",
                "curve must start at p₀ = 1 and cover at least one round",
            ));
        }
        if stderr.len() != p.len() {
            return Err(Error::param(
                "outage",
                "stderr length differs from curve length",
            ));
        }
        for k in 1..p.len() {
            if !(0.0..=1.0).contains(&p[k]) || p[k] > p[k - 1] + MONOTONE_SLACK {
                return Err(Error::param(
                    "outage",
                    format!("p[{k}] = {} breaks monotonicity", p[k]),
                ));
            }
            p[k] = p[k].min(p[k - 1]);
        }
        Ok(OutageCurve { p, stderr })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    pub fn max_rounds(&self) -> usize {
        self.p.len() - 1
    }
}

fn threshold_snr(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

fn lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(a, x)
    }
}

/// `p_k` for TypeI (any Nakagami) and CC (i.i.d. Nakagami).
pub fn outage_closed_form(config: &HarqConfig, k: usize) -> Result<f64> {
    config.validate()?;
    if k > config.max_rounds {
        return Err(Error::param("k", format!("{k} exceeds max_rounds")));
    }
    let snr = config.snr_linear();
    let thr = threshold_snr(config.rates[0]);
    match config.scheme {
        Scheme::TypeI => Ok(config.fading[..k]
            .iter()
            .map(|f| lower_gamma(f.m, f.m * thr / (snr * f.omega)))
            .product()),
        Scheme::Cc => {
            let f = config.fading[0];
            if config.fading.iter().any(|g| *g != f) {
                return Err(Error::NeedsMonteCarlo(
                    "chase combining with non-identical rounds".into(),
                ));
            }
            if k == 0 {
                return Ok(1.0);
            }
            Ok(lower_gamma(k as f64 * f.m, f.m * thr / (snr * f.omega)))
        }
        other => Err(Error::NeedsMonteCarlo(format!("{other} outage"))),
    }
}

pub fn outage_curve_closed_form(config: &HarqConfig) -> Result<OutageCurve> {
    let p = (0..=config.max_rounds)
        .map(|k| outage_closed_form(config, k))
        .collect::<Result<Vec<_>>>()?;
    OutageCurve::new(p)
}

/// `q_k = p_{k−1} − p_k` for `k < K`, `q_K = p_{K−1}`.
pub fn interarrival_pmf_from_outage(curve: &OutageCurve) -> InterarrivalPmf {
    let p = &curve.p;
    let k_max = curve.max_rounds();
    let mut q = vec![0.0; k_max + 1];
    for k in 1..=k_max {
        q[k] = if k == k_max {
            p[k - 1]
        } else {
            p[k - 1] - p[k]
        };
    }
    InterarrivalPmf::new(q).expect("telescoping sum of a monotone curve is a pmf")
}

/// A reward table on an integer lattice whose tick is `tick` normalized
/// time units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarqTable {
    pub table: RewardTable,
    pub tick: f64,
}

impl HarqTable {
    /// Capacity in bits per symbol at the scheme's normalized exponent.
    pub fn effective_capacity(&self, theta: f64) -> Result<EcResult> {
        Ok(effective_capacity_variable(&self.table, theta)?.per_unit_time(self.tick))
    }
}

/// Best rational `n/d` with `d ≤ max_den` within `tol` of `x`, by
/// continued fractions.
fn rationalize(x: f64, max_den: u64, tol: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > u32::MAX as f64 {
            return None;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x).abs() <= tol {
            return Some((h1, k1));
        }
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

const RATE_MAX_DENOMINATOR: u64 = 1024;
const LATTICE_TOLERANCE: f64 = 1e-9;
const FALLBACK_TICKS_PER_UNIT: f64 = 1024.0;
const MAX_LATTICE_SPAN: u64 = 1 << 20;

/// Places the VR renewal times `Σ_{l≤k} 1/R_l` on a common integer lattice.
/// Returns the lattice indices and the tick.
pub fn vr_lattice(rates: &[f64]) -> Result<(Vec<usize>, f64)> {
    let exact = || -> Option<(Vec<usize>, f64)> {
        // 1/R = d/n; a tick of 1/lcm(n) makes every partial sum an integer.
        let mut lcm = 1u64;
        let mut fracs = Vec::with_capacity(rates.len());
        for &r in rates {
            let (n, d) = rationalize(r, RATE_MAX_DENOMINATOR, LATTICE_TOLERANCE)?;
            if n == 0 {
                return None;
            }
            lcm = (lcm / gcd(lcm, n)).checked_mul(n)?;
            if lcm > MAX_LATTICE_SPAN {
                return None;
            }
            fracs.push((n, d));
        }
        let mut acc = 0u64;
        let mut idx = Vec::with_capacity(rates.len());
        for (n, d) in fracs {
            acc = acc.checked_add(d.checked_mul(lcm / n)?)?;
            idx.push(acc as usize);
        }
        (acc <= MAX_LATTICE_SPAN).then(|| (idx, 1.0 / lcm as f64))
    };
    if let Some(lattice) = exact() {
        return Ok(lattice);
    }
    let tick = 1.0 / FALLBACK_TICKS_PER_UNIT;
    let mut time = 0.0;
    let mut idx = Vec::with_capacity(rates.len());
    for &r in rates {
        time += 1.0 / r;
        let n = (time / tick).round();
        if (n * tick - time).abs() > LATTICE_TOLERANCE || n < 1.0 || n > MAX_LATTICE_SPAN as f64 {
            return Err(Error::LatticeError { value: time });
        }
        idx.push(n as usize);
    }
    Ok((idx, tick))
}

/// Outage-based reward table of a scheme: successes at round `k` with
/// probability `p_{k−1} − p_k`, and a zero-reward failure at `K` with `p_K`.
pub fn reward_table_outage(
    curve: &OutageCurve,
    rates: &[f64],
    scheme: Scheme,
) -> Result<HarqTable> {
    let k_max = curve.max_rounds();
    let p = &curve.p;
    let expected = if scheme.is_fixed_rate() { 1 } else { k_max };
    if rates.len() != expected {
        return Err(Error::param(
            "rates",
            format!("{scheme} needs {expected} rate(s), got {}", rates.len()),
        ));
    }
    let (times, tick): (Vec<usize>, f64) = match scheme {
        Scheme::Vr => vr_lattice(rates)?,
        _ => ((1..=k_max).collect(), 1.0),
    };
    let mut xp_reward = 0.0;
    let mut entries = Vec::with_capacity(k_max + 1);
    for k in 1..=k_max {
        let reward = match scheme {
            Scheme::Vr => 1.0,
            Scheme::Xp => {
                xp_reward += rates[k - 1];
                xp_reward
            }
            _ => rates[0],
        };
        entries.push(RewardEntry::new(times[k - 1], "S", p[k - 1] - p[k], reward));
    }
    entries.push(RewardEntry::new(times[k_max - 1], "F", p[k_max], 0.0));
    Ok(HarqTable {
        table: RewardTable::new(entries)?,
        tick,
    })
}

/// Maximum arrival rate of a fixed-rate scheme: every renewal delivers `R`.
pub fn ec_max_arrival(curve: &OutageCurve, rate: f64, theta_bar: f64) -> Result<EcResult> {
    effective_capacity_constant(&interarrival_pmf_from_outage(curve), rate, theta_bar)
}

/// Outage effective capacity at the scheme's normalized exponent.
pub fn ec_outage(config: &HarqConfig, curve: &OutageCurve, theta: f64) -> Result<EcResult> {
    config.validate()?;
    if curve.max_rounds() != config.max_rounds {
        return Err(Error::param(
            "outage",
            "curve length does not match max_rounds",
        ));
    }
    reward_table_outage(curve, &config.rates, config.scheme)?.effective_capacity(theta)
}

/// Closed-form long-term average throughput of the outage process.
pub fn ltat_harq(curve: &OutageCurve, rates: &[f64], scheme: Scheme) -> f64 {
    let p = &curve.p;
    let k_max = curve.max_rounds();
    let p_k = p[k_max];
    match scheme {
        Scheme::Vr => {
            let denom: f64 = (0..k_max).map(|k| p[k] / rates[k]).sum();
            (1.0 - p_k) / denom
        }
        Scheme::Xp => {
            let num: f64 = (1..=k_max).map(|k| rates[k - 1] * (p[k - 1] - p_k)).sum();
            num / p[..k_max].iter().sum::<f64>()
        }
        _ => rates[0] * (1.0 - p_k) / p[..k_max].iter().sum::<f64>(),
    }
}

fn integral_symbols(value: f64) -> Result<usize> {
    let n = value.round();
    if (n - value).abs() > LATTICE_TOLERANCE * value.max(1.0) || n < 1.0 {
        return Err(Error::LatticeError { value });
    }
    Ok(n as usize)
}

/// The same outage process on a lattice of single symbols with rewards in
/// bits, for use with an unnormalized exponent `θ`.
pub fn raw_reward_table(config: &HarqConfig, curve: &OutageCurve) -> Result<RewardTable> {
    config.validate()?;
    let k_max = config.max_rounds;
    let p = &curve.p;
    let bits = config.packet_bits()?;
    let mut entries = Vec::with_capacity(k_max + 1);
    let mut time = 0usize;
    let mut reward = 0.0;
    for k in 1..=k_max {
        match config.scheme {
            Scheme::Vr => {
                time += integral_symbols(bits / config.rates[k - 1])?;
                reward = bits;
            }
            Scheme::Xp => {
                let l = config.round_symbols()?;
                time += integral_symbols(l)?;
                reward += l * config.rates[k - 1];
            }
            _ => {
                let l = config.round_symbols()?;
                time += integral_symbols(l)?;
                reward = l * config.rates[0];
            }
        }
        entries.push(RewardEntry::new(time, "S", p[k - 1] - p[k], reward));
    }
    entries.push(RewardEntry::new(time, "F", p[k_max], 0.0));
    RewardTable::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{coefficients_a, ltat};
    use approx::assert_relative_eq;

    fn config(scheme: Scheme, rate: f64, snr_db: f64, k: usize) -> HarqConfig {
        HarqConfig {
            scheme,
            max_rounds: k,
            rates: vec![rate],
            snr_db,
            fading: vec![Fading::RAYLEIGH; k],
            packet_bits: Some(1080.0),
            subcodeword_symbols: None,
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("Type-I".parse::<Scheme>().unwrap(), Scheme::TypeI);
        assert!("harq".parse::<Scheme>().is_err());
    }

    #[test]
    fn closed_form_oracles() {
        let c = config(Scheme::TypeI, 1.0, 0.0, 2);
        assert_relative_eq!(
            outage_closed_form(&c, 1).unwrap(),
            1.0 - (-1f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            outage_closed_form(&c, 2).unwrap(),
            (1.0 - (-1f64).exp()).powi(2),
            max_relative = 1e-14
        );
        let c = config(Scheme::Cc, 1.0, 0.0, 2);
        assert_relative_eq!(
            outage_closed_form(&c, 2).unwrap(),
            1.0 - 2.0 * (-1f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            outage_closed_form(&c, 2).unwrap(),
            0.264_241_117_657_115_4,
            max_relative = 1e-14
        );
        assert_eq!(outage_closed_form(&c, 0).unwrap(), 1.0);
    }

    #[test]
    fn zero_rate_never_fails() {
        let c = config(Scheme::TypeI, 1e-300, 10.0, 3);
        assert_eq!(outage_closed_form(&c, 1).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_refuses_other_schemes() {
        let c = config(Scheme::Ir, 1.0, 10.0, 2);
        assert!(matches!(
            outage_closed_form(&c, 1),
            Err(Error::NeedsMonteCarlo(_))
        ));
        let mut c = config(Scheme::Cc, 1.0, 10.0, 2);
        c.fading[1].omega = 2.0;
        assert!(matches!(
            outage_closed_form(&c, 1),
            Err(Error::NeedsMonteCarlo(_))
        ));
        c.scheme = Scheme::TypeI;
        assert!(outage_closed_form(&c, 2).is_ok());
    }

    #[test]
    fn pmf_from_outage() {
        let one = interarrival_pmf_from_outage(&OutageCurve::new(vec![1.0, 0.0]).unwrap());
        assert_eq!(one.probs(), &[0.0, 1.0]);
        let two = interarrival_pmf_from_outage(&OutageCurve::new(vec![1.0, 0.4, 0.1]).unwrap());
        assert_relative_eq!(two.prob(1), 0.6, max_relative = 1e-15);
        assert_relative_eq!(two.prob(2), 0.4, max_relative = 1e-15);
    }

    #[test]
    fn curve_validation() {
        assert!(OutageCurve::new(vec![0.9, 0.1]).is_err());
        assert!(OutageCurve::new(vec![1.0, 0.1, 0.2]).is_err());
        assert!(OutageCurve::new(vec![1.0]).is_err());
    }

    #[test]
    fn fr_table_by_hand() {
        let curve = OutageCurve::new(vec![1.0, 0.2]).unwrap();
        let t = reward_table_outage(&curve, &[2.0], Scheme::Ir).unwrap();
        assert_eq!(t.tick, 1.0);
        let e = t.table.entries();
        assert_eq!(
            (e[0].interarrival, e[0].state.as_str(), e[0].reward),
            (1, "S", 2.0)
        );
        assert_relative_eq!(e[0].prob, 0.8, max_relative = 1e-15);
        assert_eq!(
            (e[1].interarrival, e[1].state.as_str(), e[1].reward),
            (1, "F", 0.0)
        );
        assert_relative_eq!(e[1].prob, 0.2, max_relative = 1e-15);
    }

    #[test]
    fn xp_with_single_rate_is_fr() {
        let curve = OutageCurve::new(vec![1.0, 0.5, 0.2, 0.05]).unwrap();
        let fr = reward_table_outage(&curve, &[3.0], Scheme::Ir).unwrap();
        let xp = reward_table_outage(&curve, &[3.0, 0.0, 0.0], Scheme::Xp).unwrap();
        assert_eq!(fr, xp);
        assert_eq!(
            ltat_harq(&curve, &[3.0], Scheme::Ir),
            ltat_harq(&curve, &[3.0, 0.0, 0.0], Scheme::Xp)
        );
    }

    #[test]
    fn vr_with_equal_rates_matches_fr() {
        let curve = OutageCurve::new(vec![1.0, 0.5, 0.2, 0.05]).unwrap();
        let fr = reward_table_outage(&curve, &[4.0], Scheme::Ir).unwrap();
        let vr = reward_table_outage(&curve, &[4.0; 3], Scheme::Vr).unwrap();
        assert_eq!(vr.tick, 0.25);
        for theta_hat in [1e-3, 0.5, 20.0] {
            // θ̂ = bθ and θ̄ = Lθ = θ̂/R.
            let c_fr = fr.effective_capacity(theta_hat / 4.0).unwrap().capacity;
            let c_vr = vr.effective_capacity(theta_hat).unwrap().capacity;
            assert_relative_eq!(c_fr, c_vr, max_relative = 1e-12);
        }
    }

    #[test]
    fn vr_lattices() {
        let (idx, tick) = vr_lattice(&[4.0, 3.0, 3.0, 2.0, 2.0]).unwrap();
        assert_eq!(tick, 1.0 / 12.0);
        assert_eq!(idx, vec![3, 7, 11, 17, 23]);
        let (idx, tick) = vr_lattice(&[3.75, 1.75]).unwrap();
        assert_eq!(tick, 1.0 / 105.0);
        assert_eq!(idx, vec![28, 88]);
        assert!(matches!(
            vr_lattice(&[std::f64::consts::PI]),
            Err(Error::LatticeError { .. })
        ));
    }

    #[test]
    fn ltat_formulas_match_tables() {
        let curve = OutageCurve::new(vec![1.0, 0.5, 0.25]).unwrap();
        assert_relative_eq!(
            ltat_harq(&curve, &[2.0], Scheme::Cc),
            1.0,
            max_relative = 1e-15
        );
        let cases: [(Scheme, Vec<f64>); 3] = [
            (Scheme::Ir, vec![2.0]),
            (Scheme::Vr, vec![3.0, 2.0]),
            (Scheme::Xp, vec![2.5, 0.75]),
        ];
        for (scheme, rates) in cases {
            let t = reward_table_outage(&curve, &rates, scheme).unwrap();
            assert_relative_eq!(
                ltat(&t.table) / t.tick,
                ltat_harq(&curve, &rates, scheme),
                max_relative = 1e-12
            );
        }
        let perfect = OutageCurve::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ltat_harq(&perfect, &[3.0], Scheme::TypeI), 3.0);
    }

    #[test]
    fn max_arrival_limits() {
        let cfg = HarqConfig::reference_defaults(Scheme::Cc);
        let curve = outage_curve_closed_form(&cfg).unwrap();
        let ec = ec_max_arrival(&curve, 4.0, 1e4).unwrap();
        assert!(ec.capacity >= 0.8 - 1e-12 && ec.capacity <= ec.upper_bound + 1e-12);
        let ec = ec_max_arrival(&curve, 4.0, 1e-4).unwrap();
        let ltat = 4.0 / curve.p()[..5].iter().sum::<f64>();
        assert!((ec.capacity - ltat).abs() <= 1e-3);
        let perfect = OutageCurve::new(vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(
            ec_max_arrival(&perfect, 4.0, 3.0).unwrap().capacity,
            4.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn outage_capacity_properties() {
        let cfg = HarqConfig::reference_defaults(Scheme::TypeI);
        let curve = outage_curve_closed_form(&cfg).unwrap();
        for theta in [1e-3, 0.1, 1.0, 10.0] {
            let out = ec_outage(&cfg, &curve, theta).unwrap();
            let max = ec_max_arrival(&curve, 4.0, theta).unwrap();
            assert!(out.capacity <= max.capacity);
            assert!(out.capacity >= 0.0 && out.capacity <= out.upper_bound + 1e-9);
        }
        let small = ec_outage(&cfg, &curve, 1e-8).unwrap();
        let ltat = ltat_harq(&curve, &[4.0], Scheme::TypeI);
        assert!((small.capacity - ltat).abs() <= 1e-4 * ltat);
        assert!(ec_outage(&cfg, &curve, 1e4).unwrap().capacity < 1e-3);

        let perfect = OutageCurve::new(vec![1.0, 0.3, 0.0]).unwrap();
        let cfg2 = config(Scheme::Ir, 2.0, 10.0, 2);
        assert_eq!(
            ec_outage(&cfg2, &perfect, 0.7).unwrap().capacity,
            ec_max_arrival(&perfect, 2.0, 0.7).unwrap().capacity
        );
    }

    #[test]
    fn normalized_root_equations_hold() {
        let curve = OutageCurve::new(vec![1.0, 0.4, 0.15, 0.05]).unwrap();
        let p = curve.p();
        let theta = 0.3;

        let fr = reward_table_outage(&curve, &[2.0], Scheme::Cc).unwrap();
        let z = fr.effective_capacity(theta).unwrap().zeta;
        let g: f64 = (1..=3)
            .map(|k| (p[k - 1] - p[k]) * (-2.0 * theta).exp() * z.powi(k as i32))
            .sum::<f64>()
            + p[3] * z.powi(3);
        assert!((g - 1.0).abs() <= 1e-9);

        let rates = [3.0, 2.0, 1.5];
        let vr = reward_table_outage(&curve, &rates, Scheme::Vr).unwrap();
        let z = vr.effective_capacity(theta).unwrap().zeta;
        let time = |k: usize| rates[..k].iter().map(|r| 1.0 / r).sum::<f64>();
        let g: f64 = (1..=3)
            .map(|k| (p[k - 1] - p[k]) * (-theta).exp() * z.powf(time(k)))
            .sum::<f64>()
            + p[3] * z.powf(time(3));
        assert!((g - 1.0).abs() <= 1e-9);

        let rates = [2.0, 0.5, 0.25];
        let xp = reward_table_outage(&curve, &rates, Scheme::Xp).unwrap();
        let z = xp.effective_capacity(theta).unwrap().zeta;
        let cum = |k: usize| rates[..k].iter().sum::<f64>();
        let g: f64 = (1..=3)
            .map(|k| (p[k - 1] - p[k]) * (-theta * cum(k)).exp() * z.powi(k as i32))
            .sum::<f64>()
            + p[3] * z.powi(3);
        assert!((g - 1.0).abs() <= 1e-9);
        assert_eq!(coefficients_a(&xp.table, 0.0).len(), 3);
    }

    #[test]
    fn raw_units_round_trip() {
        let curve = OutageCurve::new(vec![1.0, 0.4, 0.15, 0.05]).unwrap();
        let theta = 2e-4;
        let mut cfg = config(Scheme::Ir, 4.0, 10.0, 3);
        let normalized = ec_outage(&cfg, &curve, cfg.normalized_theta(theta).unwrap())
            .unwrap()
            .capacity;
        let raw = effective_capacity_variable(&raw_reward_table(&cfg, &curve).unwrap(), theta)
            .unwrap()
            .capacity;
        assert_relative_eq!(normalized, raw, max_relative = 1e-10);

        cfg.scheme = Scheme::Vr;
        cfg.rates = vec![4.0, 3.0, 2.0];
        let normalized = ec_outage(&cfg, &curve, cfg.normalized_theta(theta).unwrap())
            .unwrap()
            .capacity;
        let raw = effective_capacity_variable(&raw_reward_table(&cfg, &curve).unwrap(), theta)
            .unwrap()
            .capacity;
        assert_relative_eq!(normalized, raw, max_relative = 1e-10);

        cfg.scheme = Scheme::Xp;
        cfg.rates = vec![4.0, 0.5, 0.0];
        let normalized = ec_outage(&cfg, &curve, cfg.normalized_theta(theta).unwrap())
            .unwrap()
            .capacity;
        let raw = effective_capacity_variable(&raw_reward_table(&cfg, &curve).unwrap(), theta)
            .unwrap()
            .capacity;
        assert_relative_eq!(normalized, raw, max_relative = 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(HarqConfig::reference_defaults(Scheme::Xp)
            .validate()
            .is_ok());
        let mut c = HarqConfig::reference_defaults(Scheme::Vr);
        c.rates[2] = 0.0;
        assert!(c.validate().is_err());
        let mut c = HarqConfig::reference_defaults(Scheme::Cc);
        c.fading.pop();
        assert!(c.validate().is_err());
        let mut c = HarqConfig::reference_defaults(Scheme::Xp);
        c.rates[0] = 0.0;
        assert!(c.validate().is_err());
    }
}
