//! Online and retrospective changepoint detection for multivariate streams
//! based on degenerate kernel U-statistics.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod limits;
pub mod monitor;
pub mod numeric;
pub mod retro;
pub mod rng;
pub mod spectrum;
pub mod ustat;

pub use error::{Error, Result};
pub use kernels::{Bandwidth, FnKernel, Kernel, KernelSpec, Norm, PsdKernelSpec, ResolvedKernel};
pub use diagnostics::{moment_test, MomentTestResult, Scalarization};
pub use harness::{
    cusum_baseline, generate, run_table, Alternative, CusumVariant, ExperimentReport, GeneratedData, KStar,
    ScenarioSpec, Strength, TableConfig,
};
pub use limits::{critical_value, Calibration, LimitKind, LimitSample, LimitSimConfig, Span};
pub use monitor::{
    delay_constants, empirical_delay_distribution, run, DelayConstants, DelaySummary, Horizon, Monitor, MonitorConfig,
    MonitorEvent, Scheme, StoppingTime,
};
pub use retro::{retro_statistic, retro_test, RetroResult};
pub use spectrum::{estimate_spectrum, SpectrumEstimate};
pub use ustat::{boundary, BoundaryMode, BoundaryParams, DetectorState, WindowParams};
