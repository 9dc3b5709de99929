//! Monte Carlo simulation of the null limit functionals and extraction of
//! critical values.
//!
//! Every replication draws `L` independent Wiener paths (one per eigenvalue)
//! on a fixed time grid from its own seed-derived stream, so replications are
//! order independent and two simulations with equal seed and grid share paths.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{order_statistic_quantile, sort_floats};
use crate::rng::{stream_rng, StreamRng};
use crate::spectrum::SpectrumEstimate;
use crate::ustat::WindowParams;

pub const DEFAULT_GRID: usize = 4096;
pub const DEFAULT_GRID_BAR: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    /// `sup u^{-beta} |sum_l lambda_l (W_l(u)^2 - u)|` (CUSUM detector).
    Gamma,
    /// `sup u^{-beta} sup_{v<=u} |G(u, v)|` (Page detector).
    GammaBar,
    /// Moving-window process for the repurposing detector.
    GammaWindow,
    /// Weighted Brownian-bridge functional (retrospective test).
    Bridge,
}

impl LimitKind {
    pub fn default_grid(self) -> usize {
        match self {
            LimitKind::GammaBar => DEFAULT_GRID_BAR,
            _ => DEFAULT_GRID,
        }
    }
}

/// Times over which the supremum is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    /// `grid_n` equal steps on `(0, u0]`: the continuous-time limit, with
    /// `u0 = a0 / (1 + a0)` for closed-ended monitoring with `M / m -> a0`,
    /// and 1 for open-ended monitoring or short horizons.
    Uniform(f64),
    /// The times `u_k = k / (m + k)`, `2 <= k <= M - 1`, at which a
    /// closed-ended monitor can alarm; the window functional uses the exact
    /// recycled counts `r_k`. Thinned to at most `grid_n` points.
    Monitoring { m: usize, horizon: usize },
    /// The split times `k / m`, `2 <= k <= m - 2`, of a retrospective test on
    /// a sample of size `m`. Bridge limit only.
    Sample { m: usize },
}

impl Span {
    /// Right end of the time interval.
    pub fn u0(&self) -> f64 {
        match *self {
            Span::Uniform(u0) => u0,
            Span::Monitoring { m, horizon } => (horizon - 1) as f64 / (m + horizon - 1) as f64,
            Span::Sample { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSimConfig {
    pub lambdas: Vec<f64>,
    pub beta: f64,
    pub span: Span,
    pub grid_n: usize,
    pub reps: usize,
    pub seed: u64,
    pub window: Option<WindowParams>,
    pub zeta: Option<f64>,
}

impl LimitSimConfig {
    pub fn new(lambdas: Vec<f64>, seed: u64) -> Self {
        Self {
            lambdas,
            beta: 0.0,
            span: Span::Uniform(1.0),
            grid_n: DEFAULT_GRID,
            reps: 10_000,
            seed,
            window: None,
            zeta: None,
        }
    }

    pub fn validate(&self, kind: LimitKind) -> Result<()> {
        if self.grid_n < 100 {
            return Err(Error::Config(format!("grid_n = {} < 100", self.grid_n)));
        }
        if self.reps < 100 {
            return Err(Error::Config(format!("reps = {} < 100", self.reps)));
        }
        match self.span {
            Span::Uniform(u0) if !(u0 > 0.0 && u0 <= 1.0) => {
                return Err(Error::Config(format!("u0 = {u0} not in (0, 1]")));
            }
            Span::Monitoring { m, horizon } if m < 2 || horizon < 3 => {
                return Err(Error::Config(format!("monitoring span needs m >= 2 and M >= 3, got m = {m}, M = {horizon}")));
            }
            Span::Sample { m } if m < 4 => {
                return Err(Error::Config(format!("sample span needs m >= 4, got {m}")));
            }
            Span::Sample { .. } if kind != LimitKind::Bridge => {
                return Err(Error::Config("sample span applies to the bridge limit only".into()));
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta = {} not in [0, 1)", self.beta)));
        }
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("non-finite eigenvalue".into()));
        }
        match kind {
            LimitKind::GammaWindow => self
                .window
                .ok_or_else(|| Error::Config("window parameters required".into()))?
                .validate()?,
            LimitKind::Bridge => {
                let z = self
                    .zeta
                    .ok_or_else(|| Error::Config("bridge weight exponent zeta required".into()))?;
                if !(z < 1.0) {
                    return Err(Error::Config(format!("zeta = {z} must be < 1")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Monitoring steps on the grid: all of `2..M`, or every `stride`-th
    /// one ending at `M - 1` when there are more than `grid_n`.
    fn steps(&self, horizon: usize) -> Vec<usize> {
        let n = horizon - 2;
        let stride = n.div_ceil(self.grid_n).max(1);
        let mut ks: Vec<usize> = (2..horizon).rev().step_by(stride).collect();
        ks.reverse();
        ks
    }

    fn u_grid(&self) -> Vec<f64> {
        match self.span {
            Span::Uniform(u0) => {
                let n = self.grid_n as f64;
                (1..=self.grid_n).map(|j| u0 * j as f64 / n).collect()
            }
            Span::Monitoring { m, horizon } => self
                .steps(horizon)
                .into_iter()
                .map(|k| k as f64 / (m + k) as f64)
                .collect(),
            Span::Sample { m } => (1..=m).map(|j| j as f64 / m as f64).collect(),
        }
    }

    /// Second time of the window functional at each point of [`Self::u_grid`].
    fn window_times(&self, window: &WindowParams) -> Vec<f64> {
        match self.span {
            Span::Uniform(_) => self.u_grid().iter().map(|u| window_time_map(*u, window)).collect(),
            Span::Monitoring { m, horizon } => self
                .steps(horizon)
                .into_iter()
                .map(|k| {
                    let w = window.length(k, m);
                    if k > w {
                        let r = k - w;
                        r as f64 / (m + r) as f64
                    } else {
                        0.0
                    }
                })
                .collect(),
            Span::Sample { .. } => unreachable!("rejected by validate"),
        }
    }
}

/// Sup draws of one limit functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub sup_draws: Vec<f64>,
    pub kind: LimitKind,
}

/// Independent Wiener paths sampled on an increasing grid of positive times.
#[derive(Debug, Clone)]
pub struct WienerPaths {
    pub times: Vec<f64>,
    /// `paths[l][j] = W_l(times[j])`.
    pub paths: Vec<Vec<f64>>,
}

impl WienerPaths {
    pub fn simulate(times: Vec<f64>, count: usize, rng: &mut StreamRng) -> Self {
        let sd: Vec<f64> = times
            .iter()
            .scan(0.0, |prev, &t| {
                let dt = t - *prev;
                *prev = t;
                Some(dt.max(0.0).sqrt())
            })
            .collect();
        let paths = (0..count)
            .map(|_| {
                let mut w = 0.0;
                sd.iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(rng);
                        w += s * z;
                        w
                    })
                    .collect()
            })
            .collect();
        Self { times, paths }
    }

    /// Keeps every `stride`-th grid point (1-based multiples of `stride`).
    pub fn subsample(&self, stride: usize) -> Self {
        let pick = |v: &[f64]| v.iter().skip(stride - 1).step_by(stride).copied().collect();
        Self {
            times: pick(&self.times),
            paths: self.paths.iter().map(|p| pick(p)).collect(),
        }
    }
}

/// `Gamma(u_j) = sum_l lambda_l (W_l(u_j)^2 - u_j)` along the grid.
pub fn gamma_process(paths: &WienerPaths, lambdas: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; paths.times.len()];
    for (lambda, w) in lambdas.iter().zip(&paths.paths) {
        for ((gj, wj), t) in g.iter_mut().zip(w).zip(&paths.times) {
            *gj += lambda * (wj * wj - t);
        }
    }
    g
}

fn weighted_sup(values: impl Iterator<Item = (f64, f64)>, beta: f64) -> f64 {
    values
        .map(|(u, g)| if beta == 0.0 { g.abs() } else { u.powf(-beta) * g.abs() })
        .fold(0.0, f64::max)
}

/// `sup_j u_j^{-beta} |Gamma(u_j)|`.
pub fn gamma_functional(paths: &WienerPaths, lambdas: &[f64], beta: f64) -> f64 {
    let g = gamma_process(paths, lambdas);
    weighted_sup(paths.times.iter().copied().zip(g), beta)
}

/// `sup_j u_j^{-beta} sup_{v in {0} u grid, v <= u_j} |G(u_j, v)|`, where
/// `G(u,v) = sum_l lambda_l [(W_l(u) - a W_l(v))^2 - (u - v a)(1 - v a)]`,
/// `a = (1-u)/(1-v)`. The `v = 0` slice is `Gamma(u)`.
pub fn gamma_bar_functional(paths: &WienerPaths, lambdas: &[f64], beta: f64) -> f64 {
    let n = paths.times.len();
    let l = lambdas.len().min(paths.paths.len());
    if l == 0 || n == 0 {
        return 0.0;
    }
    let w = DMatrix::from_fn(n, l, |j, c| paths.paths[c][j]);
    let mut wl = w.clone();
    for (c, lambda) in lambdas.iter().take(l).enumerate() {
        wl.column_mut(c).scale_mut(*lambda);
    }
    // p[(i, j)] = sum_l lambda_l W_l(t_i) W_l(t_j)
    let p = &wl * w.transpose();
    let lsum: f64 = lambdas.iter().take(l).sum();
    let t = &paths.times;
    let mut best = 0.0f64;
    for j in 0..n {
        let u = t[j];
        let pjj = p[(j, j)];
        let mut inner = (pjj - u * lsum).abs();
        for i in 0..j {
            let v = t[i];
            let a = (1.0 - u) / (1.0 - v);
            let va = v * a;
            let g = pjj - 2.0 * a * p[(i, j)] + a * a * p[(i, i)] - (u - va) * (1.0 - va) * lsum;
            inner = inner.max(g.abs());
        }
        let weighted = if beta == 0.0 { inner } else { u.powf(-beta) * inner };
        best = best.max(weighted);
    }
    best
}

/// Time change of the moving window: 0 for `u <= c_w / (1 + c_w)`, otherwise
/// `f (1 - b_w) / (1 + f (1 - b_w))` with `f = u / (1 - u) - c_w`.
pub fn window_time_map(u: f64, window: &WindowParams) -> f64 {
    if u <= window.cw / (1.0 + window.cw) {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let f = (u / (1.0 - u) - window.cw) * (1.0 - window.bw);
    f / (1.0 + f)
}

/// Grid for the window functional: the union of `u_grid` and the second
/// times `ys`, with index pairs `(idx(u_j), idx(y_j))` (`None` for `y = 0`).
fn window_grid(u_grid: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<(usize, Option<usize>)>) {
    let mut times: Vec<f64> = u_grid.iter().chain(ys.iter()).copied().filter(|t| *t > 0.0).collect();
    sort_floats(&mut times);
    times.dedup();
    let find = |t: f64| times.binary_search_by(|x| x.total_cmp(&t)).expect("grid point");
    let idx = u_grid
        .iter()
        .zip(ys)
        .map(|(u, y)| (find(*u), if *y > 0.0 { Some(find(*y)) } else { None }))
        .collect();
    (times, idx)
}

fn window_functional(
    paths: &WienerPaths,
    index: &[(usize, Option<usize>)],
    lambdas: &[f64],
    beta: f64,
) -> f64 {
    let mut g = vec![0.0; index.len()];
    for (lambda, w) in lambdas.iter().zip(&paths.paths) {
        for (gj, (iu, iy)) in g.iter_mut().zip(index) {
            let (wy, ty) = match iy {
                Some(i) => (w[*i], paths.times[*i]),
                None => (0.0, 0.0),
            };
            let diff = w[*iu] - wy;
            *gj += lambda * (diff * diff - (paths.times[*iu] - ty));
        }
    }
    weighted_sup(index.iter().map(|(iu, _)| paths.times[*iu]).zip(g), beta)
}

/// `sup_{0<t<1} (t(1-t))^{-zeta} |sum_l lambda_l (B_l(t)^2 - t(1-t))|` with
/// `B_l(t) = W_l(t) - t W_l(1)`; `paths` must end at `t = 1`.
pub fn bridge_functional(paths: &WienerPaths, lambdas: &[f64], zeta: f64) -> f64 {
    bridge_sup(paths, lambdas, zeta, 0..paths.times.len() - 1)
}

/// Supremum over the grid indices in `over`; the last grid time must be 1.
fn bridge_sup(paths: &WienerPaths, lambdas: &[f64], zeta: f64, over: std::ops::Range<usize>) -> f64 {
    let n = paths.times.len();
    let mut g = vec![0.0; n];
    for (lambda, w) in lambdas.iter().zip(&paths.paths) {
        let w1 = w[n - 1];
        for ((gj, wj), t) in g.iter_mut().zip(w).zip(&paths.times) {
            let b = wj - t * w1;
            *gj += lambda * (b * b - t * (1.0 - t));
        }
    }
    paths.times[over.clone()]
        .iter()
        .zip(&g[over])
        .map(|(t, v)| {
            let q = if zeta == 0.0 { 1.0 } else { (t * (1.0 - t)).powf(zeta) };
            v.abs() / q
        })
        .fold(0.0, f64::max)
}

fn run_reps<F>(cfg: &LimitSimConfig, times: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&WienerPaths) -> f64 + Sync,
{
    let nonzero = cfg.lambdas.iter().filter(|l| **l != 0.0).count();
    if nonzero == 0 {
        return vec![0.0; cfg.reps];
    }
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(cfg.seed, &[rep as u64]);
            let paths = WienerPaths::simulate(times.to_vec(), cfg.lambdas.len(), &mut rng);
            f(&paths)
        })
        .collect()
}

pub fn simulate_gamma_sup(cfg: &LimitSimConfig) -> Result<LimitSample> {
    cfg.validate(LimitKind::Gamma)?;
    let draws = run_reps(cfg, &cfg.u_grid(), |p| gamma_functional(p, &cfg.lambdas, cfg.beta));
    Ok(LimitSample {
        sup_draws: draws,
        kind: LimitKind::Gamma,
    })
}

/// Cost is O(grid_n^2 L) per replication.
pub fn simulate_gamma_bar_sup(cfg: &LimitSimConfig) -> Result<LimitSample> {
    cfg.validate(LimitKind::GammaBar)?;
    let draws = run_reps(cfg, &cfg.u_grid(), |p| gamma_bar_functional(p, &cfg.lambdas, cfg.beta));
    Ok(LimitSample {
        sup_draws: draws,
        kind: LimitKind::GammaBar,
    })
}

pub fn simulate_gamma_window_sup(cfg: &LimitSimConfig) -> Result<LimitSample> {
    cfg.validate(LimitKind::GammaWindow)?;
    let window = cfg.window.expect("validated");
    let (times, index) = window_grid(&cfg.u_grid(), &cfg.window_times(&window));
    let draws = run_reps(cfg, &times, |p| window_functional(p, &index, &cfg.lambdas, cfg.beta));
    Ok(LimitSample {
        sup_draws: draws,
        kind: LimitKind::GammaWindow,
    })
}

/// Bridges live on `(0, 1)`: a uniform span uses `grid_n` equal steps on
/// `(0, 1]` whatever its `u0`; a sample span uses the split times exactly.
pub fn simulate_bridge_sup(cfg: &LimitSimConfig) -> Result<LimitSample> {
    cfg.validate(LimitKind::Bridge)?;
    let zeta = cfg.zeta.expect("validated");
    let (times, over) = match cfg.span {
        Span::Sample { m } => (cfg.u_grid(), 1..m - 2),
        _ => {
            let n = cfg.grid_n as f64;
            ((1..=cfg.grid_n).map(|j| j as f64 / n).collect(), 0..cfg.grid_n - 1)
        }
    };
    let draws = run_reps(cfg, &times, |p| bridge_sup(p, &cfg.lambdas, zeta, over.clone()));
    Ok(LimitSample {
        sup_draws: draws,
        kind: LimitKind::Bridge,
    })
}

pub fn simulate(kind: LimitKind, cfg: &LimitSimConfig) -> Result<LimitSample> {
    match kind {
        LimitKind::Gamma => simulate_gamma_sup(cfg),
        LimitKind::GammaBar => simulate_gamma_bar_sup(cfg),
        LimitKind::GammaWindow => simulate_gamma_window_sup(cfg),
        LimitKind::Bridge => simulate_bridge_sup(cfg),
    }
}

/// Empirical `(1 - alpha)` quantile of the draws, taken as the
/// `ceil(n (1 - alpha))`-th order statistic so that at most a fraction
/// `alpha` of draws exceeds it.
pub fn critical_value(sample: &LimitSample, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} not in (0, 1)")));
    }
    if sample.sup_draws.is_empty() {
        return Err(Error::Input("empty limit sample".into()));
    }
    let mut sorted = sample.sup_draws.clone();
    sort_floats(&mut sorted);
    Ok(order_statistic_quantile(&sorted, 1.0 - alpha))
}

/// Knobs for turning a spectrum into a critical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Grid size; `None` picks the kind's default.
    pub grid_n: Option<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Keep only the leading `top_l` eigenvalues.
    pub top_l: Option<usize>,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            grid_n: None,
            reps: 10_000,
            seed: 0,
            top_l: None,
        }
    }
}

/// Pipeline `spectrum -> limit sample -> critical value`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    kind: LimitKind,
    spectrum: &SpectrumEstimate,
    span: Span,
    beta: f64,
    window: Option<WindowParams>,
    zeta: Option<f64>,
    alpha: f64,
    cal: &Calibration,
) -> Result<f64> {
    let lambdas = match cal.top_l {
        Some(l) => spectrum.top(l).lambdas,
        None => spectrum.lambdas.clone(),
    };
    let cfg = LimitSimConfig {
        lambdas,
        beta,
        span,
        grid_n: cal.grid_n.unwrap_or(kind.default_grid()),
        reps: cal.reps,
        seed: cal.seed,
        window,
        zeta,
    };
    critical_value(&simulate(kind, &cfg)?, alpha)
}

/// Critical-value record written by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueRecord {
    pub kind: LimitKind,
    pub span: Span,
    pub alpha: f64,
    pub critical_value: f64,
    pub reps: usize,
    pub grid_n: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambdas: Vec<f64>) -> LimitSimConfig {
        LimitSimConfig {
            grid_n: 256,
            reps: 200,
            ..LimitSimConfig::new(lambdas, 42)
        }
    }

    #[test]
    fn zero_lambdas_give_zero() {
        let mut c = cfg(vec![0.0, 0.0]);
        c.window = Some(WindowParams::default());
        c.zeta = Some(0.0);
        for kind in [LimitKind::Gamma, LimitKind::GammaBar, LimitKind::GammaWindow, LimitKind::Bridge] {
            let s = simulate(kind, &c).unwrap();
            assert!(s.sup_draws.iter().all(|d| *d == 0.0));
            assert_eq!(critical_value(&s, 0.05).unwrap(), 0.0);
        }
    }

    #[test]
    fn validation() {
        let mut c = cfg(vec![1.0]);
        c.grid_n = 50;
        assert!(simulate_gamma_sup(&c).is_err());
        let mut c = cfg(vec![1.0]);
        c.reps = 10;
        assert!(simulate_gamma_sup(&c).is_err());
        let mut c = cfg(vec![1.0]);
        c.span = Span::Uniform(0.0);
        assert!(simulate_gamma_sup(&c).is_err());
        assert!(simulate_gamma_window_sup(&cfg(vec![1.0])).is_err());
        let mut c = cfg(vec![1.0]);
        c.zeta = Some(1.0);
        assert!(simulate_bridge_sup(&c).is_err());
    }

    #[test]
    fn window_map_examples() {
        let w = WindowParams { cw: 1.0, bw: 0.5 };
        assert_eq!(window_time_map(0.5, &w), 0.0);
        assert_eq!(window_time_map(0.3, &w), 0.0);
        // f = 0.8/0.2 - 1 = 3, 3*0.5 / (1 + 1.5) = 0.6
        assert!((window_time_map(0.8, &w) - 0.6).abs() < 1e-12);
        let full = WindowParams { cw: 0.3, bw: 1.0 };
        assert!((0..100).all(|j| window_time_map(j as f64 / 100.0, &full) == 0.0));
    }

    #[test]
    fn monitoring_span_grid() {
        let mut c = cfg(vec![1.0]);
        c.span = Span::Monitoring { m: 10, horizon: 50 };
        let u = c.u_grid();
        assert_eq!(u.len(), 48);
        assert_eq!(u[0], 2.0 / 12.0);
        assert_eq!(*u.last().unwrap(), 49.0 / 59.0);
        c.span = Span::Monitoring { m: 10, horizon: 1000 };
        let ks = c.steps(1000);
        assert!(ks.len() <= 256);
        assert_eq!(*ks.last().unwrap(), 999);
        assert_eq!(ks[1] - ks[0], 4);
        // w = 10 + (k - 10) / 2, so r_30 = 10 and y = 10 / 20
        c.span = Span::Monitoring { m: 10, horizon: 31 };
        let y = c.window_times(&WindowParams::default());
        assert_eq!(*y.last().unwrap(), 0.5);
        assert_eq!(y[..9].iter().filter(|v| **v == 0.0).count(), 9);
    }

    #[test]
    fn critical_value_conventions() {
        let s = LimitSample {
            sup_draws: (1..=100).rev().map(f64::from).collect(),
            kind: LimitKind::Gamma,
        };
        assert_eq!(critical_value(&s, 0.05).unwrap(), 95.0);
        assert_eq!(critical_value(&s, 1e-9).unwrap(), 100.0);
        assert!(critical_value(&s, 0.0).is_err());
        assert!(critical_value(&s, 1.0).is_err());
        let flat = LimitSample {
            sup_draws: vec![2.5; 10],
            kind: LimitKind::Bridge,
        };
        assert_eq!(critical_value(&flat, 0.3).unwrap(), 2.5);
    }

    #[test]
    fn bit_reproducible() {
        let c = cfg(vec![1.0, -0.5, 0.25]);
        let a = simulate_gamma_sup(&c).unwrap();
        let b = simulate_gamma_sup(&c).unwrap();
        assert_eq!(a, b);
        assert!(a.sup_draws.iter().all(|d| *d >= 0.0));
    }
}
