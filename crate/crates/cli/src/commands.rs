use std::io::Write;

use anyhow::{bail, Context, Result};
use kmon_core::diagnostics::moment_test;
use kmon_core::harness::{run_table, Alternative, ScenarioSpec, Strength, TableConfig};
use kmon_core::limits::{calibrate, CriticalValueRecord, LimitKind, Span};
use kmon_core::rng::{derive_seed, label_key};
use kmon_core::{
    estimate_spectrum, retro_test, BoundaryMode, BoundaryParams, Calibration, Horizon, Monitor, MonitorConfig,
    Scheme, SpectrumEstimate, StoppingTime,
};

use crate::config::RunConfig;
use crate::input::parse_csv;

/// Exit status for a run that raised an alarm.
pub const EXIT_ALARM: i32 = 2;

/// Seed for a subcommand: the user seed combined with the command name.
pub fn command_seed(cfg: &RunConfig, command: &str) -> u64 {
    derive_seed(cfg.seed(), &[label_key(command)])
}

fn calibration(cfg: &RunConfig, command: &str, default_reps: usize) -> Calibration {
    Calibration {
        grid_n: cfg.grid_n,
        reps: cfg.reps.unwrap_or(default_reps),
        seed: command_seed(cfg, command),
        top_l: cfg.top_l,
    }
}

fn training(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let path = cfg.training_csv.as_ref().context("training data required (--training)")?;
    let mut rows = parse_csv(path)?;
    if let (Some(m), None) = (cfg.m, &cfg.stream_csv) {
        rows.truncate(m);
    }
    Ok(rows)
}

/// Alarm times of a closed horizon; the unit interval for open-ended and
/// short-horizon monitoring.
fn span(cfg: &RunConfig, m: usize) -> Span {
    match (cfg.horizon, cfg.short_horizon.unwrap_or(false)) {
        (Some(horizon), false) => Span::Monitoring { m, horizon },
        _ => Span::Uniform(1.0),
    }
}

pub fn critval(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let kernel_spec = cfg.kernel();
    let spectrum = match (&cfg.spectrum_json, &cfg.training_csv) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SpectrumEstimate::from_json(&text)?
        }
        (None, Some(_)) => {
            let x = training(cfg)?;
            let kernel = kernel_spec.resolve(Some(&x))?;
            estimate_spectrum(&kernel, &x)?
        }
        (None, None) => bail!("critval needs --training or --spectrum"),
    };
    let kind = cfg.kind.unwrap_or(match cfg.scheme() {
        Scheme::D1 => LimitKind::Gamma,
        Scheme::D2 => LimitKind::GammaBar,
        Scheme::D3(_) => LimitKind::GammaWindow,
    });
    let cal = calibration(cfg, "critval", 10_000);
    let beta = cfg.beta.unwrap_or(0.0);
    let span = span(cfg, spectrum.m);
    let cv = calibrate(
        kind,
        &spectrum,
        span,
        beta,
        Some(cfg.window()),
        Some(cfg.zeta.unwrap_or(0.0)),
        cfg.alpha(),
        &cal,
    )?;
    let record = CriticalValueRecord {
        kind,
        span,
        alpha: cfg.alpha(),
        critical_value: cv,
        reps: cal.reps,
        grid_n: cal.grid_n.unwrap_or(kind.default_grid()),
        seed: cfg.seed(),
    };
    writeln!(out, "{}", serde_json::to_string(&record)?)?;
    Ok(0)
}

fn critical_value(cfg: &RunConfig) -> Result<f64> {
    if let Some(c) = cfg.critical_value {
        return Ok(c);
    }
    let path = cfg
        .critval_json
        .as_ref()
        .context("critical value required (--critical-value or --critval)")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record: serde_json::Value = serde_json::from_str(&text)?;
    record["critical_value"]
        .as_f64()
        .with_context(|| format!("{} has no numeric critical_value", path.display()))
}

pub fn monitor(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let (train, stream) = match (&cfg.training_csv, &cfg.stream_csv) {
        (Some(_), Some(s)) => (training(cfg)?, parse_csv(s)?),
        (Some(t), None) => {
            let m = cfg.m.context("single input file needs --m")?;
            let mut rows = parse_csv(t)?;
            if rows.len() < m {
                bail!("{} has {} rows, fewer than m = {m}", t.display(), rows.len());
            }
            let stream = rows.split_off(m);
            (rows, stream)
        }
        _ => bail!("monitor needs --training"),
    };
    let horizon = cfg.horizon.map_or(Horizon::Open, Horizon::Closed);
    let beta = cfg.beta.unwrap_or(0.0);
    let boundary = match (cfg.short_horizon.unwrap_or(false), cfg.horizon) {
        (true, Some(big_m)) => BoundaryParams {
            beta,
            mode: BoundaryMode::ShortHorizon { horizon: big_m },
        },
        (true, None) => bail!("--short-horizon needs --horizon"),
        (false, _) => BoundaryParams::standard(beta),
    };
    let mcfg = MonitorConfig {
        scheme: cfg.scheme(),
        boundary,
        horizon,
        critical_value: critical_value(cfg)?,
        kernel: cfg.kernel(),
        max_page_lag: None,
    };
    let mut mon = Monitor::new(mcfg, &train)?;
    for obs in &stream {
        let event = mon.step(obs)?;
        writeln!(out, "{}", serde_json::to_string(&event)?)?;
        if mon.stopping_time().is_some() {
            break;
        }
    }
    match mon.stopping_time() {
        Some(StoppingTime::Alarm(k)) => {
            writeln!(out, "alarm at k={k}")?;
            Ok(EXIT_ALARM)
        }
        _ => {
            writeln!(out, "no alarm")?;
            Ok(0)
        }
    }
}

pub fn retro(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let x = training(cfg)?;
    let res = retro_test(
        &cfg.kernel(),
        &x,
        cfg.zeta.unwrap_or(0.0),
        cfg.alpha(),
        &calibration(cfg, "retro", 2_000),
    )?;
    writeln!(out, "{}", serde_json::to_string(&res)?)?;
    Ok(0)
}

/// Eigenvalues kept per cell by `simulate`; the pilot spectrum has
/// thousands, and dropping the tail does not move the critical values.
const SIMULATE_TOP_L: usize = 200;

pub fn table_config(cfg: &RunConfig) -> TableConfig {
    if let Some(t) = &cfg.table {
        return t.clone();
    }
    let mut scenario = ScenarioSpec::study(
        cfg.m.unwrap_or(200),
        cfg.alternative.unwrap_or(Alternative::Null),
        cfg.strength.unwrap_or(Strength::Strong),
    );
    if let Some(big_m) = cfg.horizon {
        scenario.horizon = big_m;
    }
    scenario.reps = cfg.reps.unwrap_or(scenario.reps);
    scenario.seed = command_seed(cfg, "simulate");
    let kernels = match &cfg.kernel {
        Some(k) => vec![k.clone()],
        None => vec![
            kmon_core::KernelSpec::sqrt_l1(),
            kmon_core::KernelSpec::euclidean(),
            kmon_core::KernelSpec::gaussian_median(),
        ],
    };
    let schemes = match cfg.scheme {
        Some(_) => vec![cfg.scheme()],
        None => vec![Scheme::D1, Scheme::D2, Scheme::D3(cfg.window())],
    };
    TableConfig {
        scenario,
        kernels,
        schemes,
        betas: vec![cfg.beta.unwrap_or(0.0)],
        baselines: Vec::new(),
        alpha: cfg.alpha(),
        calibration: Calibration {
            grid_n: cfg.grid_n,
            reps: 2_000,
            seed: command_seed(cfg, "simulate-limits"),
            top_l: Some(cfg.top_l.unwrap_or(SIMULATE_TOP_L)),
        },
        size_adjusted: cfg.size_adjusted.unwrap_or(false),
        pilot_m: None,
    }
}

pub fn simulate(cfg: &RunConfig, text: bool, out: &mut dyn Write) -> Result<i32> {
    let report = run_table(&table_config(cfg))?;
    if text {
        write!(out, "{}", report.to_text())?;
    } else {
        write!(out, "{}", report.to_csv()?)?;
    }
    Ok(0)
}

pub fn diagnose(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let x = training(cfg)?;
    let scalars = kmon_core::diagnostics::scalarize(&x, cfg.scalarize.unwrap_or_default())?;
    let res = moment_test(
        &scalars,
        cfg.order_k.unwrap_or(4),
        cfg.alpha(),
        cfg.b.unwrap_or(2_000),
        command_seed(cfg, "diagnose"),
    )?;
    writeln!(out, "{}", serde_json::to_string(&res)?)?;
    Ok(0)
}
