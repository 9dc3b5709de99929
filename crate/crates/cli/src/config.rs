use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kmon_core::diagnostics::Scalarization;
use kmon_core::harness::{Alternative, Strength, TableConfig};
use kmon_core::{KernelSpec, LimitKind, Scheme, WindowParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    D1,
    D2,
    D3,
}

/// Everything a subcommand may need. Loaded from a JSON file, then
/// overridden field by field by command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: Option<KernelSpec>,
    pub beta: Option<f64>,
    pub scheme: Option<SchemeName>,
    /// Closed horizon `M`; open-ended when absent.
    pub horizon: Option<usize>,
    pub short_horizon: Option<bool>,
    pub cw: Option<f64>,
    pub bw: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub grid_n: Option<usize>,
    pub reps: Option<usize>,
    pub top_l: Option<usize>,
    pub zeta: Option<f64>,
    pub kind: Option<LimitKind>,
    pub critical_value: Option<f64>,
    /// Training size when training and stream share one file.
    pub m: Option<usize>,
    pub training_csv: Option<PathBuf>,
    pub stream_csv: Option<PathBuf>,
    pub spectrum_json: Option<PathBuf>,
    pub critval_json: Option<PathBuf>,
    pub order_k: Option<u32>,
    pub b: Option<usize>,
    pub scalarize: Option<Scalarization>,
    pub alternative: Option<Alternative>,
    pub strength: Option<Strength>,
    pub size_adjusted: Option<bool>,
    /// Complete table specification for `simulate`.
    pub table: Option<TableConfig>,
}

macro_rules! overlay {
    ($base:ident, $over:ident, $($f:ident),*) => {
        RunConfig { $($f: $over.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        let base = self;
        overlay!(
            base, over, kernel, beta, scheme, horizon, short_horizon, cw, bw, alpha, seed, grid_n, reps, top_l,
            zeta, kind, critical_value, m, training_csv, stream_csv, spectrum_json, critval_json, order_k, b,
            scalarize, alternative, strength, size_adjusted, table
        )
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel.clone().unwrap_or_else(KernelSpec::euclidean)
    }

    pub fn window(&self) -> WindowParams {
        let d = WindowParams::default();
        WindowParams {
            cw: self.cw.unwrap_or(d.cw),
            bw: self.bw.unwrap_or(d.bw),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.scheme.unwrap_or(SchemeName::D1) {
            SchemeName::D1 => Scheme::D1,
            SchemeName::D2 => Scheme::D2,
            SchemeName::D3 => Scheme::D3(self.window()),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.05)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Kernel names accepted on the command line: `h1`/`sqrt_l1`,
/// `h2`/`euclidean`, `h3`/`gaussian`, `grothendieck`, `energy:ETA[:l1|l2]`,
/// `gaussian:A`, or a JSON kernel object.
pub fn parse_kernel(s: &str) -> Result<KernelSpec> {
    use kmon_core::{Bandwidth, Norm};
    let spec = match s {
        "h1" | "sqrt_l1" => KernelSpec::sqrt_l1(),
        "h2" | "euclidean" | "energy" => KernelSpec::euclidean(),
        "h3" | "gaussian" => KernelSpec::gaussian_median(),
        "grothendieck" => KernelSpec::Grothendieck,
        _ if s.trim_start().starts_with('{') => serde_json::from_str(s).context("kernel JSON")?,
        _ => {
            let parts: Vec<&str> = s.split(':').collect();
            match parts.as_slice() {
                ["energy", eta] | ["energy", eta, "l2"] => KernelSpec::Energy {
                    eta: eta.parse()?,
                    norm: Norm::L2,
                },
                ["energy", eta, "l1"] => KernelSpec::Energy {
                    eta: eta.parse()?,
                    norm: Norm::L1,
                },
                ["gaussian", "median"] => KernelSpec::gaussian_median(),
                ["gaussian", a] => KernelSpec::GaussianDerived {
                    a: Bandwidth::Fixed(a.parse()?),
                },
                _ => bail!("unknown kernel {s:?}"),
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_flags() {
        let base = RunConfig {
            beta: Some(0.5),
            alpha: Some(0.1),
            ..Default::default()
        };
        let over = RunConfig {
            beta: Some(0.0),
            ..Default::default()
        };
        let c = base.overlay(over);
        assert_eq!(c.beta, Some(0.0));
        assert_eq!(c.alpha, Some(0.1));
    }

    #[test]
    fn kernel_names() {
        assert_eq!(parse_kernel("h1").unwrap(), KernelSpec::sqrt_l1());
        assert_eq!(parse_kernel("energy:1").unwrap(), KernelSpec::euclidean());
        assert_eq!(parse_kernel(r#"{"kind":"grothendieck"}"#).unwrap(), KernelSpec::Grothendieck);
        assert!(parse_kernel("energy:3").is_err());
        assert!(parse_kernel("nope").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"betta": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"kernel":{"kind":"energy","eta":0.5,"norm":"l1"},"horizon":100}"#).unwrap();
        assert_eq!(c.kernel(), KernelSpec::sqrt_l1());
    }
}
