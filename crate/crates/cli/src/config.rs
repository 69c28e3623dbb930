use std::path::{Path, PathBuf};

use ecap::{Fading, HarqConfig, InterarrivalPmf, RewardEntry, RewardTable, Scheme};
use serde::Deserialize;

use crate::exit::CliError;

/// Parameters read from a JSON document; command-line flags override them.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Option<Scheme>,
    pub max_rounds: Option<usize>,
    pub rates: Option<Vec<f64>>,
    pub snr_db: Option<f64>,
    pub fading: Option<Vec<Fading>>,
    pub packet_bits: Option<f64>,
    pub subcodeword_symbols: Option<f64>,
    pub mode: Option<Mode>,
    pub theta: Option<f64>,
    pub theta_grid: Option<ThetaGrid>,
    pub theta_units: Option<ThetaUnits>,
    /// `[[k, prob], …]`.
    pub pmf: Option<Vec<(usize, f64)>>,
    pub reward: Option<f64>,
    pub table: Option<Vec<RewardEntry>>,
    pub t: Option<usize>,
    pub t_max: Option<usize>,
    pub initial_rates: Option<Vec<f64>>,
    pub subsequent_rates: Option<Vec<f64>>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MaxArrival,
    Outage,
}

/// How the `theta` values of the `harq` command are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaUnits {
    /// The scheme's own exponent: per round of `L` symbols, or per `b` symbols for VR.
    Normalized,
    /// Per channel symbol.
    Symbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default = "default_log")]
    pub log: bool,
}

fn default_log() -> bool {
    true
}

impl ThetaGrid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let bad = |reason: &str| CliError::config(format!("invalid `theta_grid`: {reason}"));
        if self.points == 0 {
            return Err(bad("points must be at least 1"));
        }
        if !(self.min.is_finite()
            && self.max.is_finite()
            && self.min >= 0.0
            && self.max >= self.min)
        {
            return Err(bad("need 0 ≤ min ≤ max"));
        }
        if self.log && self.min <= 0.0 {
            return Err(bad("a log grid needs min > 0"));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let last = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let f = i as f64 / last;
                if i == 0 {
                    self.min
                } else if i + 1 == self.points {
                    self.max
                } else if self.log {
                    (self.min.ln() + (self.max.ln() - self.min.ln()) * f).exp()
                } else {
                    self.min + (self.max - self.min) * f
                }
            })
            .collect())
    }
}

/// `k:prob[,k:prob…]`.
pub fn parse_pmf(spec: &str) -> Result<Vec<(usize, f64)>, CliError> {
    let bad =
        |item: &str| CliError::config(format!("invalid `pmf` item `{item}`; expected k:prob"));
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (k, p) = item.split_once(':').ok_or_else(|| bad(item))?;
            Ok((
                k.trim().parse().map_err(|_| bad(item))?,
                p.trim().parse().map_err(|_| bad(item))?,
            ))
        })
        .collect()
}

/// `k,state,prob,reward[;…]`.
pub fn parse_table(spec: &str) -> Result<Vec<RewardEntry>, CliError> {
    let bad = |item: &str| {
        CliError::config(format!(
            "invalid `table` entry `{item}`; expected k,state,prob,reward"
        ))
    };
    spec.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let f: Vec<&str> = item.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad(item));
            }
            Ok(RewardEntry::new(
                f[0].parse().map_err(|_| bad(item))?,
                f[1],
                f[2].parse().map_err(|_| bad(item))?,
                f[3].parse().map_err(|_| bad(item))?,
            ))
        })
        .collect()
}

/// Comma-separated numbers for the flag or key `name`.
pub fn parse_list(name: &str, spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::config(format!("invalid `{name}` value `{s}`")))
        })
        .collect()
}

pub fn build_pmf(pairs: &[(usize, f64)]) -> Result<InterarrivalPmf, CliError> {
    InterarrivalPmf::from_pairs(pairs).map_err(|e| CliError::config(format!("invalid `pmf`: {e}")))
}

pub fn build_table(entries: Vec<RewardEntry>) -> Result<RewardTable, CliError> {
    RewardTable::new(entries).map_err(|e| CliError::config(format!("invalid `table`: {e}")))
}

/// Fills the channel from `cfg`, using the fixed-rate defaults (20 dB,
/// `K = 5`, `R = 4`, `b = 1080`, Rayleigh) for anything left out.
pub fn build_harq(cfg: &RunConfig) -> Result<HarqConfig, CliError> {
    let scheme = cfg
        .scheme
        .ok_or_else(|| CliError::config("missing `scheme`".to_string()))?;
    let mut h = HarqConfig::reference_defaults(scheme);
    if let Some(k) = cfg.max_rounds {
        h.max_rounds = k;
        h.fading = vec![Fading::RAYLEIGH; k];
        if !scheme.is_fixed_rate() {
            h.rates
                .resize(k, if scheme == Scheme::Xp { 0.0 } else { 4.0 });
        }
    }
    if let Some(r) = &cfg.rates {
        h.rates = r.clone();
    }
    if let Some(s) = cfg.snr_db {
        h.snr_db = s;
    }
    if let Some(f) = &cfg.fading {
        h.fading = if f.len() == 1 {
            vec![f[0]; h.max_rounds]
        } else {
            f.clone()
        };
    }
    if cfg.packet_bits.is_some() {
        h.packet_bits = cfg.packet_bits;
    }
    if cfg.subcodeword_symbols.is_some() {
        h.subcodeword_symbols = cfg.subcodeword_symbols;
    }
    h.validate().map_err(CliError::from)?;
    Ok(h)
}

/// The θ values requested by `theta` or `theta_grid`.
pub fn thetas(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    match (cfg.theta, &cfg.theta_grid) {
        (Some(_), Some(_)) => Err(CliError::config(
            "give either `theta` or `theta_grid`, not both".to_string(),
        )),
        (Some(t), None) if t.is_finite() && t >= 0.0 => Ok(vec![t]),
        (Some(t), None) => Err(CliError::config(format!("invalid `theta`: {t}"))),
        (None, Some(g)) => g.values(),
        (None, None) => Err(CliError::config(
            "missing `theta` or `theta_grid`".to_string(),
        )),
    }
}
