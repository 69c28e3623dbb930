use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod exit;
mod output;

use config::{parse_list, parse_pmf, parse_table, Mode, RunConfig, ThetaGrid, ThetaUnits};
use ecap::{Fading, Scheme};
use exit::CliError;
use output::Format;

/// Effective capacity of renewal reward service processes and HARQ links.
#[derive(Debug, Parser)]
#[command(name = "ecap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Write the table here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo episodes per estimate.
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Exit with status 4 when a Monte Carlo estimate is too noisy.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Constant-reward renewal process: one row per θ.
    Constant {
        /// Interarrival pmf as `k:prob[,k:prob…]`.
        #[arg(long)]
        pmf: Option<String>,
        #[arg(long)]
        reward: Option<f64>,
        #[command(flatten)]
        theta: ThetaArgs,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Effective capacity of a HARQ scheme: one row per θ.
    Harq {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        theta_units: Option<ThetaUnits>,
        #[command(flatten)]
        theta: ThetaArgs,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Finite-time `φ(t)` and capacity of a reward table.
    Finite {
        /// Reward table as `k,state,prob,reward[;…]`.
        #[arg(long)]
        table: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long, value_enum, default_value = "none")]
        check: Check,
    },
    /// Monte Carlo outage curve, or path-simulated `φ(t)` with `--table`.
    Mc {
        #[arg(long)]
        table: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        #[arg(long)]
        t: Option<usize>,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Exhaustive rate search maximizing the outage effective capacity.
    Optimize {
        /// Per-packet exponent `θ̂`.
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        /// First-round rate grid, comma-separated.
        #[arg(long)]
        initial_rates: Option<String>,
        /// Grid of the later rounds, comma-separated.
        #[arg(long)]
        subsequent_rates: Option<String>,
        #[command(flatten)]
        channel: ChannelArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Check {
    None,
    Enumeration,
}

#[derive(Debug, Args)]
struct ThetaArgs {
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    theta_points: Option<usize>,
    /// Space the grid linearly instead of logarithmically.
    #[arg(long)]
    theta_linear: bool,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    #[arg(long)]
    scheme: Option<String>,
    /// Maximum number of rounds `K`.
    #[arg(long, visible_alias = "max-rounds")]
    k: Option<usize>,
    /// Rates in bits/symbol, comma-separated.
    #[arg(long)]
    rates: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Nakagami shape of every round.
    #[arg(long)]
    nakagami_m: Option<f64>,
    /// Mean channel power gain of every round.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    packet_bits: Option<f64>,
    #[arg(long)]
    subcodeword_symbols: Option<f64>,
}

impl ThetaArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(t) = self.theta {
            cfg.theta = Some(t);
            cfg.theta_grid = None;
        }
        match (self.theta_min, self.theta_max, self.theta_points) {
            (None, None, None) => {}
            (Some(min), Some(max), Some(points)) => {
                cfg.theta = None;
                cfg.theta_grid = Some(ThetaGrid {
                    min,
                    max,
                    points,
                    log: !self.theta_linear,
                });
            }
            _ => {
                return Err(CliError::config(
                    "`theta_grid` needs --theta-min, --theta-max and --theta-points together"
                        .to_string(),
                ))
            }
        }
        Ok(())
    }
}

impl ChannelArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(s) = &self.scheme {
            cfg.scheme = Some(s.parse::<Scheme>()?);
        }
        if self.k.is_some() {
            cfg.max_rounds = self.k;
        }
        if let Some(r) = &self.rates {
            cfg.rates = Some(parse_list("rates", r)?);
        }
        if self.snr_db.is_some() {
            cfg.snr_db = self.snr_db;
        }
        if self.nakagami_m.is_some() || self.omega.is_some() {
            let base = cfg
                .fading
                .as_ref()
                .and_then(|f| f.first().copied())
                .unwrap_or(Fading::RAYLEIGH);
            cfg.fading = Some(vec![Fading {
                m: self.nakagami_m.unwrap_or(base.m),
                omega: self.omega.unwrap_or(base.omega),
            }]);
        }
        if self.packet_bits.is_some() {
            cfg.packet_bits = self.packet_bits;
        }
        if self.subcodeword_symbols.is_some() {
            cfg.subcodeword_symbols = self.subcodeword_symbols;
        }
        Ok(())
    }
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<commands::Report, CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let g = &cli.global;
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    if g.samples.is_some() {
        cfg.samples = g.samples;
    }
    if g.workers.is_some() {
        cfg.workers = g.workers;
    }
    if g.output.is_some() {
        cfg.output.clone_from(&g.output);
    }
    let report = match &cli.command {
        Command::Constant {
            pmf,
            reward,
            theta,
            channel,
        } => {
            if let Some(p) = pmf {
                cfg.pmf = Some(parse_pmf(p)?);
            }
            if reward.is_some() {
                cfg.reward = *reward;
            }
            theta.apply(&mut cfg)?;
            channel.apply(&mut cfg)?;
            commands::constant(&cfg)?
        }
        Command::Harq {
            mode,
            theta_units,
            theta,
            channel,
        } => {
            if mode.is_some() {
                cfg.mode = *mode;
            }
            if theta_units.is_some() {
                cfg.theta_units = *theta_units;
            }
            theta.apply(&mut cfg)?;
            channel.apply(&mut cfg)?;
            commands::harq(&cfg)?
        }
        Command::Finite {
            table,
            theta,
            t_max,
            check,
        } => {
            if let Some(t) = table {
                cfg.table = Some(parse_table(t)?);
            }
            if theta.is_some() {
                cfg.theta = *theta;
            }
            if t_max.is_some() {
                cfg.t_max = *t_max;
            }
            commands::finite(&cfg, *check)?
        }
        Command::Mc {
            table,
            theta,
            t,
            channel,
        } => {
            if let Some(tb) = table {
                cfg.table = Some(parse_table(tb)?);
            }
            if theta.is_some() {
                cfg.theta = *theta;
            }
            if t.is_some() {
                cfg.t = *t;
            }
            channel.apply(&mut cfg)?;
            commands::mc(&cfg)?
        }
        Command::Optimize {
            theta,
            initial_rates,
            subsequent_rates,
            channel,
        } => {
            if theta.is_some() {
                cfg.theta = *theta;
            }
            if let Some(r) = initial_rates {
                cfg.initial_rates = Some(parse_list("initial_rates", r)?);
            }
            if let Some(r) = subsequent_rates {
                cfg.subsequent_rates = Some(parse_list("subsequent_rates", r)?);
            }
            channel.apply(&mut cfg)?;
            commands::optimize(&cfg)?
        }
    };
    let text = report.table.render(g.format)?;
    match &cfg.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?,
        None => stdout
            .write_all(text.as_bytes())
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::io(format!("cannot write output: {e}")))?,
    }
    Ok(report)
}

/// Runs `cli`, returning the exit status and the lines meant for stderr.
fn execute(cli: Cli, stdout: &mut dyn Write) -> (u8, Vec<String>) {
    let strict = cli.global.strict;
    let mut messages = Vec::new();
    let result = run(cli, stdout).and_then(|report| {
        messages.extend(report.warnings.iter().map(|w| format!("warning: {w}")));
        match report.failure {
            Some(e) => Err(e),
            None => Ok(strict && !report.warnings.is_empty()),
        }
    });
    let code = match result {
        Ok(false) => 0,
        Ok(true) => exit::VARIANCE,
        Err(e) => {
            messages.push(format!("error: {e}"));
            e.code
        }
    };
    (code as u8, messages)
}

fn main() -> ExitCode {
    let (code, messages) = execute(Cli::parse(), &mut std::io::stdout().lock());
    for m in messages {
        eprintln!("{m}");
    }
    ExitCode::from(code)
}
