use ecap::finite_time::{phi_determinant, phi_enumeration, phi_recursion};
use ecap::{
    ec_max_arrival, ec_outage, effective_capacity_constant, estimate_mgf_finite,
    estimate_reward_table, interarrival_pmf_from_outage, optimize_rates, outage_curve_closed_form,
    EcResult, Error, HarqConfig, McEstimate, McParams, McTable, OutageCurve, RateGrid,
};

use crate::config::{build_harq, build_pmf, build_table, thetas, Mode, RunConfig, ThetaUnits};
use crate::exit::{CliError, NUMERICAL};
use crate::output::{Cell, Table};
use crate::Check;

pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PACKET_THETA: f64 = 1e-3;
const ENUMERATION_TOLERANCE: f64 = 1e-12;
const DETERMINANT_TOLERANCE: f64 = 1e-8;

pub struct Report {
    pub table: Table,
    pub warnings: Vec<String>,
    /// Set when the table was produced but a requested check failed.
    pub failure: Option<CliError>,
}

impl Report {
    fn new(table: Table) -> Self {
        Report {
            table,
            warnings: Vec::new(),
            failure: None,
        }
    }
}

fn mc_params(cfg: &RunConfig) -> McParams {
    McParams {
        samples: cfg.samples.unwrap_or(DEFAULT_SAMPLES),
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        workers: cfg.workers.unwrap_or(0),
    }
}

fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::config(format!("missing `{key}`")))
}

fn single_theta(cfg: &RunConfig) -> Result<f64, CliError> {
    if cfg.theta_grid.is_some() {
        return Err(CliError::config(
            "`theta_grid` is not accepted here; give a single `theta`".to_string(),
        ));
    }
    thetas(cfg).map(|v| v[0])
}

/// Outage curve from its closed form when one exists, by simulation otherwise.
enum Curve {
    Exact(OutageCurve),
    Sampled(McTable),
}

impl Curve {
    fn for_config(h: &HarqConfig, params: &McParams) -> Result<Self, CliError> {
        match outage_curve_closed_form(h) {
            Ok(c) => Ok(Curve::Exact(c)),
            Err(Error::NeedsMonteCarlo(_)) => Ok(Curve::Sampled(estimate_reward_table(h, params)?)),
            Err(e) => Err(e.into()),
        }
    }

    fn curve(&self) -> &OutageCurve {
        match self {
            Curve::Exact(c) => c,
            Curve::Sampled(t) => &t.curve,
        }
    }
}

fn ec_row(theta: f64, ec: &EcResult) -> Vec<Cell> {
    vec![
        theta.into(),
        ec.zeta.into(),
        ec.capacity.into(),
        ec.lower_bound.into(),
        ec.upper_bound.into(),
        ec.approx_small_theta.into(),
        ec.ltat.into(),
    ]
}

pub fn constant(cfg: &RunConfig) -> Result<Report, CliError> {
    let (pmf, reward) = match (&cfg.pmf, cfg.scheme) {
        (Some(pairs), _) => (build_pmf(pairs)?, require(cfg.reward, "reward")?),
        (None, Some(scheme)) if scheme.is_fixed_rate() => {
            let h = build_harq(cfg)?;
            let curve = Curve::for_config(&h, &mc_params(cfg))?;
            (
                interarrival_pmf_from_outage(curve.curve()),
                cfg.reward.unwrap_or(h.rates[0]),
            )
        }
        (None, Some(scheme)) => {
            return Err(CliError::config(format!(
                "invalid `scheme`: {scheme} has no constant-reward process; use `harq`"
            )))
        }
        (None, None) => return Err(CliError::config("missing `pmf`".to_string())),
    };
    let mut table = Table::new([
        "theta", "zeta", "capacity", "lower", "upper", "approx", "ltat",
    ]);
    for theta in thetas(cfg)? {
        table.push(ec_row(
            theta,
            &effective_capacity_constant(&pmf, reward, theta)?,
        ));
    }
    Ok(Report::new(table))
}

pub fn harq(cfg: &RunConfig) -> Result<Report, CliError> {
    let h = build_harq(cfg)?;
    let mode = cfg.mode.unwrap_or(Mode::Outage);
    if mode == Mode::MaxArrival && !h.scheme.is_fixed_rate() {
        return Err(CliError::config(format!(
            "invalid `mode`: max-arrival needs a fixed-rate scheme, not {}",
            h.scheme
        )));
    }
    let units = cfg.theta_units.unwrap_or(ThetaUnits::Normalized);
    let grid = thetas(cfg)?;
    let curve = Curve::for_config(&h, &mc_params(cfg))?;
    let k = h.max_rounds;
    let mut header: Vec<String> = ["theta", "capacity", "ltat", "lower", "upper"]
        .map(String::from)
        .to_vec();
    header.extend((1..=k).map(|i| format!("p{i}")));
    header.push("stderr".into());
    header.extend((1..=k).map(|i| format!("p{i}_stderr")));
    let mut report = Report::new(Table::new(header));
    for theta in grid {
        let norm = match units {
            ThetaUnits::Normalized => theta,
            ThetaUnits::Symbol => h.normalized_theta(theta)?,
        };
        let capacity = |c: &OutageCurve| match mode {
            Mode::MaxArrival => ec_max_arrival(c, h.rates[0], norm),
            Mode::Outage => ec_outage(&h, c, norm),
        };
        let ec = capacity(curve.curve())?;
        let stderr = match &curve {
            Curve::Exact(_) => 0.0,
            Curve::Sampled(t) => {
                let est: McEstimate = t.jackknife(|c| capacity(c).map(|e| e.capacity))?;
                if est.variance_warning {
                    report.warnings.push(format!(
                        "theta {theta:e}: capacity stderr {:e} exceeds 10% of {:e}",
                        est.stderr, est.mean
                    ));
                }
                est.stderr
            }
        };
        let c = curve.curve();
        let mut row: Vec<Cell> = vec![
            theta.into(),
            ec.capacity.into(),
            ec.ltat.into(),
            ec.lower_bound.into(),
            ec.upper_bound.into(),
        ];
        row.extend(c.p()[1..].iter().map(|&p| Cell::from(p)));
        row.push(stderr.into());
        row.extend(c.stderr()[1..].iter().map(|&s| Cell::from(s)));
        report.table.push(row);
    }
    Ok(report)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

pub fn finite(cfg: &RunConfig, check: Check) -> Result<Report, CliError> {
    let table = build_table(
        cfg.table
            .clone()
            .ok_or_else(|| CliError::config("missing `table`".to_string()))?,
    )?;
    let theta = single_theta(cfg)?;
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(CliError::config(format!("invalid `theta`: {theta}")));
    }
    let t_max = require(cfg.t_max, "t_max")?;
    let series = phi_recursion(&table, theta, t_max);
    let k = table.max_interarrival();
    let mut report = Report::new(Table::new([
        "t",
        "phi",
        "capacity",
        "phi_enumeration",
        "phi_determinant",
    ]));
    let mut disagreements = Vec::new();
    for t in 1..=t_max {
        let phi = series.value(t);
        let enumerated = match check {
            Check::Enumeration => Some(phi_enumeration(&table, theta, t)?),
            Check::None => None,
        };
        let determinant = if t < k {
            None
        } else {
            match phi_determinant(&table, theta, t) {
                Ok(d) => Some(d),
                Err(Error::CoincidentRoots { separation }) => {
                    if check == Check::Enumeration {
                        disagreements.push(format!("t = {t}: roots only {separation:e} apart"));
                    }
                    None
                }
                Err(e) => return Err(e.into()),
            }
        };
        if let Some(e) = enumerated {
            if relative_gap(e, phi) > ENUMERATION_TOLERANCE {
                disagreements.push(format!("t = {t}: enumeration {e:e} vs recursion {phi:e}"));
            }
            if let Some(d) = determinant {
                if relative_gap(d, phi) > DETERMINANT_TOLERANCE {
                    disagreements.push(format!("t = {t}: determinant {d:e} vs recursion {phi:e}"));
                }
            }
        }
        report.table.push(vec![
            t.into(),
            phi.into(),
            series.capacity(t).into(),
            enumerated.into(),
            determinant.into(),
        ]);
    }
    if !disagreements.is_empty() {
        report.failure = Some(CliError {
            code: NUMERICAL,
            message: format!("routes disagree: {}", disagreements.join("; ")),
        });
    }
    Ok(report)
}

fn z_score(estimate: f64, exact: f64, stderr: f64) -> f64 {
    if estimate == exact {
        0.0
    } else {
        (estimate - exact) / stderr
    }
}

pub fn mc(cfg: &RunConfig) -> Result<Report, CliError> {
    let params = mc_params(cfg);
    if let Some(entries) = &cfg.table {
        let table = build_table(entries.clone())?;
        let theta = single_theta(cfg)?;
        let t = require(cfg.t, "t")?;
        let est = estimate_mgf_finite(&table, theta, t, &params)?;
        let series = phi_recursion(&table, theta, t);
        let exact = series.value(t);
        let scale = theta * t as f64;
        let mut report = Report::new(Table::new([
            "t",
            "theta",
            "phi_hat",
            "stderr",
            "phi_exact",
            "z_score",
            "capacity_hat",
            "capacity_stderr",
            "capacity_exact",
            "samples",
            "seed",
        ]));
        if est.variance_warning {
            report.warnings.push(format!(
                "phi stderr {:e} exceeds 10% of {:e}",
                est.stderr, est.mean
            ));
        }
        report.table.push(vec![
            t.into(),
            theta.into(),
            est.mean.into(),
            est.stderr.into(),
            exact.into(),
            z_score(est.mean, exact, est.stderr).into(),
            (-est.mean.ln() / scale).into(),
            (est.stderr / (est.mean * scale)).into(),
            series.capacity(t).into(),
            est.n.into(),
            est.seed.into(),
        ]);
        return Ok(report);
    }
    let h = build_harq(cfg)?;
    let sampled = estimate_reward_table(&h, &params)?;
    let exact = match outage_curve_closed_form(&h) {
        Ok(c) => Some(c),
        Err(Error::NeedsMonteCarlo(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let n = sampled.n as f64;
    let mut report = Report::new(Table::new(["k", "p_hat", "stderr", "p_closed", "z_score"]));
    for k in 1..=h.max_rounds {
        let p = sampled.curve.p()[k];
        let se = sampled.curve.stderr()[k];
        if p > 0.0 && se > ecap::mc::VARIANCE_WARNING_RATIO * p {
            report
                .warnings
                .push(format!("p{k} stderr {se:e} exceeds 10% of {p:e}"));
        }
        let closed = exact.as_ref().map(|c| c.p()[k]);
        let z = closed.map(|q| z_score(p, q, (q * (1.0 - q) / n).sqrt()));
        report
            .table
            .push(vec![k.into(), p.into(), se.into(), closed.into(), z.into()]);
    }
    Ok(report)
}

pub fn optimize(cfg: &RunConfig) -> Result<Report, CliError> {
    let h = build_harq(cfg)?;
    let scheme = h.scheme;
    let theta_hat = match (cfg.theta, &cfg.theta_grid) {
        (None, None) => DEFAULT_PACKET_THETA,
        _ => single_theta(cfg)?,
    };
    let standard = RateGrid::standard(scheme);
    let grid = if cfg.initial_rates.is_some() || cfg.subsequent_rates.is_some() {
        RateGrid::new(
            cfg.initial_rates
                .clone()
                .unwrap_or_else(|| standard.initial().to_vec()),
            cfg.subsequent_rates
                .clone()
                .unwrap_or_else(|| standard.subsequent().to_vec()),
        )?
    } else {
        standard
    };
    let opt = optimize_rates(scheme, &grid, &h, theta_hat, &mc_params(cfg))?;
    let width = if scheme.is_fixed_rate() {
        1
    } else {
        h.max_rounds
    };
    let mut header = vec!["kind".to_string()];
    header.extend((1..=width).map(|i| format!("r{i}")));
    header.extend(["theta", "capacity", "stderr", "samples"].map(String::from));
    let mut report = Report::new(Table::new(header));
    for (kind, point) in opt
        .points
        .iter()
        .map(|p| ("grid", p))
        .chain([("argmax", &opt.best)])
    {
        let mut row: Vec<Cell> = vec![kind.into()];
        row.extend(point.rates.iter().map(|&r| Cell::from(r)));
        row.push(ecap::rate_opt::scheme_theta(scheme, &point.rates, theta_hat).into());
        row.extend([
            point.capacity.into(),
            point.stderr.into(),
            point.samples.into(),
        ]);
        report.table.push(row);
    }
    let best = &opt.best;
    if best.stderr > ecap::mc::VARIANCE_WARNING_RATIO * best.capacity.abs() {
        report.warnings.push(format!(
            "optimum capacity stderr {:e} exceeds 10% of {:e}",
            best.stderr, best.capacity
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_table;
    use ecap::Scheme;

    fn cell(report: &Report, row: usize, col: &str) -> f64 {
        let i = report.table.header.iter().position(|h| h == col).unwrap();
        match &report.table.rows[row][i] {
            Cell::Float(v) => *v,
            Cell::Int(v) => *v as f64,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_pmf_gives_reward_rate() {
        let cfg = RunConfig {
            pmf: Some(vec![(1, 1.0)]),
            reward: Some(3.0),
            theta: Some(0.5),
            ..Default::default()
        };
        let r = constant(&cfg).unwrap();
        assert!((cell(&r, 0, "capacity") - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_pmf() {
        let cfg = RunConfig {
            pmf: Some(vec![(1, 0.5), (2, 0.5)]),
            reward: Some(1.0),
            theta: Some(1.0),
            ..Default::default()
        };
        let r = constant(&cfg).unwrap();
        // ζ solves ½ζ + ½ζ² = e, the positive root of the quadratic.
        let e = 1f64.exp();
        let zeta = (-1.0 + (1.0 + 8.0 * e).sqrt()) / 2.0;
        assert!((cell(&r, 0, "capacity") - zeta.ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_reward_is_named() {
        let cfg = RunConfig {
            pmf: Some(vec![(1, 1.0)]),
            theta: Some(0.5),
            ..Default::default()
        };
        assert!(constant(&cfg).err().unwrap().message.contains("`reward`"));
    }

    #[test]
    fn finite_check_passes_for_a_small_table() {
        let cfg = RunConfig {
            table: Some(parse_table("1,S,0.5,1;2,S,0.3,2;3,F,0.2,0").unwrap()),
            theta: Some(1.0),
            t_max: Some(12),
            ..Default::default()
        };
        let r = finite(&cfg, Check::Enumeration).unwrap();
        assert!(r.failure.is_none());
        assert_eq!(r.table.rows.len(), 12);
    }

    #[test]
    fn max_arrival_needs_fixed_rate() {
        let cfg = RunConfig {
            scheme: Some(Scheme::Vr),
            mode: Some(Mode::MaxArrival),
            theta: Some(1.0),
            ..Default::default()
        };
        assert!(harq(&cfg).err().unwrap().message.contains("`mode`"));
    }

    #[test]
    fn harq_outage_respects_tail_bound() {
        let cfg = RunConfig {
            scheme: Some(Scheme::Cc),
            theta: Some(1e3),
            ..Default::default()
        };
        let r = harq(&cfg).unwrap();
        let p5 = cell(&r, 0, "p5");
        assert!(cell(&r, 0, "capacity") <= -p5.ln() / (5.0 * 1e3));
    }
}
