use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use kmon_cli::commands;
use kmon_cli::config::{parse_kernel, RunConfig, SchemeName};
use kmon_core::diagnostics::Scalarization;
use kmon_core::harness::{Alternative, Strength};
use kmon_core::{KernelSpec, LimitKind};

/// Kernel-based sequential changepoint monitoring.
///
/// Exit status: 0 on success without alarm, 2 when `monitor` raises an
/// alarm, 1 on error.
#[derive(Parser, Debug)]
#[command(name = "kmon", version)]
struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the limit functional and print a critical value as JSON.
    Critval,
    /// Monitor a stream; prints one JSON event per step, then a summary line.
    Monitor,
    /// Retrospective test for a break inside a sample.
    Retro,
    /// Run a simulation table and print it as CSV.
    Simulate {
        /// Aligned text table instead of CSV.
        #[arg(long)]
        text: bool,
    },
    /// Randomised moment-existence test on the rows of a sample.
    Diagnose,
}

fn kernel_arg(s: &str) -> Result<KernelSpec, String> {
    parse_kernel(s).map_err(|e| format!("{e:#}"))
}

fn scalarize_arg(s: &str) -> Result<Scalarization, String> {
    match s {
        "norm" => Ok(Scalarization::Norm),
        _ => s
            .parse()
            .map(Scalarization::Coordinate)
            .map_err(|_| format!("expected `norm` or a coordinate index, got {s:?}")),
    }
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Kernel: h1 | h2 | h3 | grothendieck | energy:ETA[:l1|l2] | gaussian:A | JSON.
    #[arg(long, global = true, value_parser = kernel_arg)]
    kernel: Option<KernelSpec>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeName>,
    /// Closed monitoring horizon M (open-ended if omitted).
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Use the short-horizon boundary (requires --horizon).
    #[arg(long, global = true)]
    short_horizon: bool,
    #[arg(long, global = true)]
    cw: Option<f64>,
    #[arg(long, global = true)]
    bw: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Keep only the leading eigenvalues.
    #[arg(long, global = true)]
    top_l: Option<usize>,
    /// Weight exponent of the retrospective test.
    #[arg(long, global = true)]
    zeta: Option<f64>,
    /// Limit functional (defaults to the one matching --scheme).
    #[arg(long, global = true, value_parser = ["gamma", "gamma_bar", "gamma_window", "bridge"])]
    kind: Option<String>,
    #[arg(long, global = true)]
    critical_value: Option<f64>,
    /// Rows of --training used as training data when no --stream is given.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    training: Option<PathBuf>,
    #[arg(long, global = true)]
    stream: Option<PathBuf>,
    /// Spectrum JSON ({"m":..,"lambdas":[..]}) instead of training data.
    #[arg(long, global = true)]
    spectrum: Option<PathBuf>,
    /// Critical-value JSON as written by `critval`.
    #[arg(long, global = true)]
    critval: Option<PathBuf>,
    /// Moment order for `diagnose`.
    #[arg(long, global = true)]
    order: Option<u32>,
    /// Randomised replications for `diagnose`.
    #[arg(long = "b", global = true)]
    b: Option<usize>,
    /// `norm` or a coordinate index.
    #[arg(long, global = true, value_parser = scalarize_arg)]
    scalarize: Option<Scalarization>,
    #[arg(long, global = true, value_parser = ["null", "location", "scale", "tail", "mixed"])]
    alternative: Option<String>,
    #[arg(long, global = true, value_parser = ["strong", "weak"])]
    strength: Option<String>,
    #[arg(long, global = true)]
    size_adjusted: bool,
}

fn snake<T: serde::de::DeserializeOwned>(s: Option<String>) -> Result<Option<T>> {
    s.map(|s| serde_json::from_value(serde_json::Value::String(s)).map_err(Into::into))
        .transpose()
}

impl Flags {
    fn into_config(self) -> Result<RunConfig> {
        Ok(RunConfig {
            kernel: self.kernel,
            beta: self.beta,
            scheme: self.scheme,
            horizon: self.horizon,
            short_horizon: self.short_horizon.then_some(true),
            cw: self.cw,
            bw: self.bw,
            alpha: self.alpha,
            seed: self.seed,
            grid_n: self.grid_n,
            reps: self.reps,
            top_l: self.top_l,
            zeta: self.zeta,
            kind: snake::<LimitKind>(self.kind)?,
            critical_value: self.critical_value,
            m: self.m,
            training_csv: self.training,
            stream_csv: self.stream,
            spectrum_json: self.spectrum,
            critval_json: self.critval,
            order_k: self.order,
            b: self.b,
            scalarize: self.scalarize,
            alternative: snake::<Alternative>(self.alternative)?,
            strength: snake::<Strength>(self.strength)?,
            size_adjusted: self.size_adjusted.then_some(true),
            table: None,
        })
    }
}

fn run(cli: Cli) -> Result<i32> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.overlay(cli.flags.into_config()?);
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let code = match cli.command {
        Command::Critval => commands::critval(&cfg, &mut out)?,
        Command::Monitor => commands::monitor(&cfg, &mut out)?,
        Command::Retro => commands::retro(&cfg, &mut out)?,
        Command::Simulate { text } => commands::simulate(&cfg, text, &mut out)?,
        Command::Diagnose => commands::diagnose(&cfg, &mut out)?,
    };
    out.flush()?;
    Ok(code)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        1
    });
    std::process::exit(code);
}
