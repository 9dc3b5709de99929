//! Sequential monitoring: stopping rules on top of [`DetectorState`] and the
//! delay constants of the early-change regime.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::GeneratedData;
use crate::kernels::{Kernel, KernelSpec, ResolvedKernel};
use crate::numeric::{interp_quantile, sort_floats};
use crate::rng::{stream_rng, StreamRng};
use crate::ustat::{boundary, BoundaryMode, BoundaryParams, DetectorState, WindowParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    D1,
    D2,
    D3(WindowParams),
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::D1 => "D1",
            Scheme::D2 => "D2",
            Scheme::D3(_) => "D3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Open,
    Closed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub scheme: Scheme,
    pub boundary: BoundaryParams,
    pub horizon: Horizon,
    pub critical_value: f64,
    pub kernel: KernelSpec,
    /// Limits the Page maximum to `r >= k - lag`; only meant for very long
    /// open-ended runs.
    #[serde(default)]
    pub max_page_lag: Option<usize>,
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.critical_value > 0.0 && self.critical_value.is_finite()) {
            return Err(Error::Config(format!(
                "critical value must be positive, got {}",
                self.critical_value
            )));
        }
        if let Horizon::Closed(m) = self.horizon {
            if m < 3 {
                return Err(Error::Config(format!("closed horizon M = {m} < 3")));
            }
        }
        self.boundary.validate()?;
        if matches!(self.boundary.mode, BoundaryMode::ShortHorizon { .. })
            && self.horizon == Horizon::Open
        {
            return Err(Error::Config("short-horizon boundary needs a closed horizon".into()));
        }
        if let Scheme::D3(w) = &self.scheme {
            w.validate()?;
        }
        self.kernel.validate()
    }
}

/// One monitoring step. `alarm == (stat > c * bound)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub k: usize,
    #[serde(rename = "stat")]
    pub detector_value: f64,
    #[serde(rename = "bound")]
    pub boundary_value: f64,
    pub alarm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_at: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingTime {
    Alarm(usize),
    /// Closed horizon reached without alarm; the value is `M`.
    Horizon(usize),
    /// No alarm in the observed stream.
    Infinite,
}

impl StoppingTime {
    pub fn value(&self) -> Option<usize> {
        match *self {
            StoppingTime::Alarm(k) | StoppingTime::Horizon(k) => Some(k),
            StoppingTime::Infinite => None,
        }
    }

    pub fn is_alarm(&self) -> bool {
        matches!(self, StoppingTime::Alarm(_))
    }
}

/// Detector value for `scheme` at the state's current `k` (0 for `k < 2`).
pub fn detector_value<K: Kernel>(state: &DetectorState<K>, scheme: &Scheme) -> Result<f64> {
    if state.k() < 2 {
        return Ok(0.0);
    }
    match scheme {
        Scheme::D1 => state.d1(),
        Scheme::D2 => state.d2(),
        Scheme::D3(w) => state.d3(w),
    }
}

pub struct Monitor<K = ResolvedKernel> {
    cfg: MonitorConfig,
    state: DetectorState<K>,
    stopped: Option<StoppingTime>,
}

impl Monitor<ResolvedKernel> {
    /// Resolves the configured kernel on `training` (median bandwidths are
    /// fixed here, once).
    pub fn new(cfg: MonitorConfig, training: &[Vec<f64>]) -> Result<Self> {
        let kernel = cfg.kernel.resolve(Some(training))?;
        Self::with_kernel(cfg, kernel, training)
    }
}

impl<K: Kernel> Monitor<K> {
    pub fn with_kernel(cfg: MonitorConfig, kernel: K, training: &[Vec<f64>]) -> Result<Self> {
        cfg.validate()?;
        let state = DetectorState::new(kernel, training)?.with_max_page_lag(cfg.max_page_lag);
        Ok(Self {
            cfg,
            state,
            stopped: None,
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn state(&self) -> &DetectorState<K> {
        &self.state
    }

    pub fn stopping_time(&self) -> Option<StoppingTime> {
        self.stopped
    }

    pub fn step(&mut self, obs: &[f64]) -> Result<MonitorEvent> {
        if let Some(s) = self.stopped {
            return Err(Error::State(format!("monitor already stopped ({s:?})")));
        }
        self.state.update(obs)?;
        let k = self.state.k();
        let stat = detector_value(&self.state, &self.cfg.scheme)?;
        let bound = boundary(k, self.state.m(), &self.cfg.boundary);
        let alarm = k >= 2 && stat > self.cfg.critical_value * bound;
        let stop = if alarm {
            Some(StoppingTime::Alarm(k))
        } else {
            match self.cfg.horizon {
                Horizon::Closed(big_m) if k + 1 >= big_m => Some(StoppingTime::Horizon(big_m)),
                _ => None,
            }
        };
        self.stopped = stop;
        Ok(MonitorEvent {
            k,
            detector_value: stat,
            boundary_value: bound,
            alarm,
            stopped_at: stop.and_then(|s| s.value()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRun {
    pub events: Vec<MonitorEvent>,
    pub stopping_time: StoppingTime,
}

/// Feeds `stream` until the monitor stops or the stream runs out; a stream
/// that ends before a closed horizon is reported as [`StoppingTime::Infinite`].
pub fn run(cfg: &MonitorConfig, training: &[Vec<f64>], stream: &[Vec<f64>]) -> Result<MonitorRun> {
    let mut mon = Monitor::new(cfg.clone(), training)?;
    let mut events = Vec::new();
    for obs in stream {
        events.push(mon.step(obs)?);
        if mon.stopping_time().is_some() {
            break;
        }
    }
    Ok(MonitorRun {
        events,
        stopping_time: mon.stopping_time().unwrap_or(StoppingTime::Infinite),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayConstants {
    pub rho: f64,
    pub w_const: f64,
    pub v_m: f64,
    pub v_m_prime: f64,
}

/// Early-change delay constants: the expected delay is `w_const * m^rho`
/// with spread `v_m`; `v_m_prime` scales late-change delays.
pub fn delay_constants(
    beta: f64,
    c: f64,
    theta: f64,
    nu_gap: f64,
    sigma_star: f64,
    m: usize,
    dh: f64,
) -> Result<DelayConstants> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Config(format!("beta = {beta} not in [0, 1)")));
    }
    if !(c > 0.0) {
        return Err(Error::Config(format!("c = {c} must be positive")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Config(format!("theta = {theta} not in (0, 1)")));
    }
    if !(sigma_star > 0.0) || m == 0 {
        return Err(Error::Config("sigma_star and m must be positive".into()));
    }
    if nu_gap == 0.0 || !nu_gap.is_finite() {
        return Err(Error::Undetectable(format!("nu gap {nu_gap}")));
    }
    if dh == 0.0 || !dh.is_finite() {
        return Err(Error::Undetectable(format!("h-divergence {dh}")));
    }
    let m = m as f64;
    let rho = (1.0 - beta) / (2.0 - beta);
    let w_const = (c / (theta * nu_gap.abs())).powf(1.0 / (2.0 - beta));
    let v_m = 2.0 * sigma_star / ((2.0 - beta) * nu_gap.abs()) * (w_const * m.powf(rho)).sqrt();
    let v_m_prime = m.sqrt() / (theta * dh.abs().sqrt());
    Ok(DelayConstants {
        rho,
        w_const,
        v_m,
        v_m_prime,
    })
}

/// Outcome of one monitored replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    /// The stopping time (first alarm with `k >= 2`).
    pub stopping_time: StoppingTime,
    /// First crossing strictly after the change, if any.
    pub kappa: Option<usize>,
    pub k_star: usize,
}

/// Scans a stream without stopping at pre-change false alarms, so both the
/// stopping time and the post-change crossing `kappa` are recovered.
pub fn scan_replication<K: Kernel>(
    cfg: &MonitorConfig,
    state: &mut DetectorState<K>,
    stream: &[Vec<f64>],
    k_star: usize,
) -> Result<ReplicationOutcome> {
    let limit = match cfg.horizon {
        Horizon::Closed(big_m) => stream.len().min(big_m - 1),
        Horizon::Open => stream.len(),
    };
    let mut tau = None;
    let mut kappa = None;
    for obs in &stream[..limit] {
        state.update(obs)?;
        let k = state.k();
        if k < 2 {
            continue;
        }
        let stat = detector_value(state, &cfg.scheme)?;
        if stat > cfg.critical_value * boundary(k, state.m(), &cfg.boundary) {
            tau.get_or_insert(k);
            if k > k_star {
                kappa = Some(k);
                break;
            }
        }
    }
    let stopping_time = match (tau, cfg.horizon) {
        (Some(k), _) => StoppingTime::Alarm(k),
        (None, Horizon::Closed(big_m)) if stream.len() + 1 >= big_m => StoppingTime::Horizon(big_m),
        _ => StoppingTime::Infinite,
    };
    Ok(ReplicationOutcome {
        stopping_time,
        kappa,
        k_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub reps: usize,
    /// Fraction of replications that alarmed before the horizon.
    pub power: f64,
    /// Median and quartiles of `kappa - k_star` over replications with a
    /// post-change crossing; `NaN` when there are none.
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub delays: Vec<f64>,
}

impl DelaySummary {
    pub fn from_outcomes(outcomes: &[ReplicationOutcome]) -> Self {
        let reps = outcomes.len();
        let alarms = outcomes.iter().filter(|o| o.stopping_time.is_alarm()).count();
        let mut delays: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.kappa.map(|k| (k - o.k_star) as f64))
            .collect();
        sort_floats(&mut delays);
        let q = |p| if delays.is_empty() { f64::NAN } else { interp_quantile(&delays, p) };
        Self {
            reps,
            power: if reps == 0 { 0.0 } else { alarms as f64 / reps as f64 },
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
            delays,
        }
    }
}

/// Monte Carlo distribution of the detection delay. Replication `i` draws
/// its data from `stream_rng(seed, [i])`.
pub fn empirical_delay_distribution<G>(
    cfg: &MonitorConfig,
    generator: G,
    reps: usize,
    seed: u64,
) -> Result<DelaySummary>
where
    G: Fn(&mut StreamRng) -> GeneratedData + Sync,
{
    cfg.validate()?;
    let outcomes = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[i as u64]);
            let data = generator(&mut rng);
            let kernel = cfg.kernel.resolve(Some(&data.training))?;
            let mut state =
                DetectorState::new(kernel, &data.training)?.with_max_page_lag(cfg.max_page_lag);
            scan_replication(cfg, &mut state, &data.stream, data.k_star)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DelaySummary::from_outcomes(&outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: f64, horizon: Horizon) -> MonitorConfig {
        MonitorConfig {
            scheme: Scheme::D1,
            boundary: BoundaryParams::standard(0.0),
            horizon,
            critical_value: c,
            kernel: KernelSpec::euclidean(),
            max_page_lag: None,
        }
    }

    fn seq(n: usize, f: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![f(i), f(i + 7) * 0.5]).collect()
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.0, Horizon::Open).validate().is_err());
        assert!(cfg(1.0, Horizon::Closed(2)).validate().is_err());
        let mut c = cfg(1.0, Horizon::Open);
        c.boundary.mode = BoundaryMode::ShortHorizon { horizon: 10 };
        assert!(c.validate().is_err());
        c.horizon = Horizon::Closed(10);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn tiny_c_alarms_at_two() {
        let tr = seq(10, |i| ((i * 37) % 11) as f64);
        let st = seq(5, |i| ((i * 13) % 7) as f64 + 0.3);
        let out = run(&cfg(1e-12, Horizon::Open), &tr, &st).unwrap();
        assert_eq!(out.stopping_time, StoppingTime::Alarm(2));
        assert_eq!(out.events.len(), 2);
        assert!(!out.events[0].alarm);
        assert_eq!(out.events[1].stopped_at, Some(2));
    }

    #[test]
    fn closed_horizon_and_termination() {
        let tr = seq(10, |i| ((i * 37) % 11) as f64);
        let st = seq(50, |i| ((i * 13) % 11) as f64);
        let out = run(&cfg(1e9, Horizon::Closed(6)), &tr, &st).unwrap();
        assert_eq!(out.stopping_time, StoppingTime::Horizon(6));
        assert_eq!(out.events.len(), 5);
        assert!(out.events.iter().all(|e| e.k < 6));
        let mut mon = Monitor::new(cfg(1e9, Horizon::Closed(3)), &tr).unwrap();
        mon.step(&st[0]).unwrap();
        assert!(mon.step(&st[1]).unwrap().stopped_at == Some(3));
        assert!(matches!(mon.step(&st[2]), Err(Error::State(_))));
    }

    #[test]
    fn short_stream_is_infinite() {
        let tr = seq(10, |i| i as f64);
        let out = run(&cfg(1e-12, Horizon::Open), &tr, &seq(1, |_| 3.0)).unwrap();
        assert_eq!(out.stopping_time, StoppingTime::Infinite);
        let out = run(&cfg(1e-12, Horizon::Open), &tr, &[]).unwrap();
        assert!(out.events.is_empty());
    }

    #[test]
    fn event_json_shape() {
        let e = MonitorEvent {
            k: 3,
            detector_value: 0.5,
            boundary_value: 1.5,
            alarm: false,
            stopped_at: None,
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"k":3,"stat":0.5,"bound":1.5,"alarm":false}"#
        );
    }

    #[test]
    fn delay_constant_examples() {
        let d = delay_constants(0.0, 2.0, 0.5, 4.0, 1.0, 100, 1.0).unwrap();
        assert_eq!(d.rho, 0.5);
        assert!((d.w_const - 1.0).abs() < 1e-15);
        // 2 / (2 * 4) * sqrt(1 * 10)
        assert!((d.v_m - 0.25 * 10f64.sqrt()).abs() < 1e-12);
        assert!((d.v_m_prime - 20.0).abs() < 1e-12);
        let d = delay_constants(0.9, 1.0, 0.5, 1.0, 1.0, 10, 1.0).unwrap();
        assert!((d.rho - 0.1 / 1.1).abs() < 1e-15);
        assert!(matches!(
            delay_constants(0.0, 1.0, 0.5, 0.0, 1.0, 10, 1.0),
            Err(Error::Undetectable(_))
        ));
        assert!(matches!(
            delay_constants(0.0, 1.0, 0.5, 1.0, 1.0, 10, 0.0),
            Err(Error::Undetectable(_))
        ));
    }
}
