//! Data generators for the simulation study, the table driver and the
//! Euclidean CUSUM baselines.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::limits::{calibrate, Calibration, LimitKind, Span};
use crate::monitor::{detector_value, Scheme};
use crate::numeric::{interp_quantile, order_statistic_quantile, sort_floats};
use crate::rng::{derive_seed, label_key, stream_rng, StreamRng};
use crate::spectrum::estimate_spectrum;
use crate::ustat::{boundary, BoundaryParams, DetectorState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KStar {
    Fixed(usize),
    /// Uniform over `{10, m, 5m}` independently per replication.
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Null,
    Location,
    Scale,
    Tail,
    /// Location, scale or tail change, chosen uniformly per replication.
    Mixed,
}

/// Concrete post-change law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostChange {
    /// `N(mu 1, I)`.
    Mean { mu: f64 },
    /// `N(0, Sigma)` with `Sigma_ij = exp(-|i-j| / decay)`.
    Covariance { decay: f64 },
    /// Independent coordinates `t_nu / sd(t_nu)`.
    StudentT { nu: f64 },
}

impl PostChange {
    pub fn preset(alt: Alternative, strength: Strength) -> Option<Self> {
        let strong = strength == Strength::Strong;
        match alt {
            Alternative::Null | Alternative::Mixed => None,
            Alternative::Location => Some(PostChange::Mean {
                mu: if strong { 0.3 } else { 0.25 },
            }),
            Alternative::Scale => Some(PostChange::Covariance {
                decay: if strong { 10.0 } else { 5.0 },
            }),
            Alternative::Tail => Some(PostChange::StudentT {
                nu: if strong { 2.5 } else { 3.0 },
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub d: usize,
    pub m: usize,
    /// Closed monitoring horizon `M`.
    pub horizon: usize,
    pub k_star: KStar,
    pub alternative: Alternative,
    pub strength: Strength,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Defaults of the simulation study: `d = 5`, `M = 10 m`, randomized
    /// change time, 1000 replications.
    pub fn study(m: usize, alternative: Alternative, strength: Strength) -> Self {
        Self {
            d: 5,
            m,
            horizon: 10 * m,
            k_star: KStar::Randomized,
            alternative,
            strength,
            reps: 1000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.m < 3 {
            return Err(Error::Config(format!("m = {} < 3", self.m)));
        }
        if self.horizon < 3 {
            return Err(Error::Config(format!("horizon M = {} < 3", self.horizon)));
        }
        let max_k = match self.k_star {
            KStar::Fixed(k) => k,
            KStar::Randomized => 5 * self.m,
        };
        if self.alternative != Alternative::Null && max_k >= self.horizon {
            return Err(Error::Config(format!(
                "change time {max_k} not before the horizon {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Alarm times of the closed horizon, used for calibration.
    pub fn span(&self) -> Span {
        Span::Monitoring {
            m: self.m,
            horizon: self.horizon,
        }
    }

    fn null(&self) -> Self {
        Self {
            alternative: Alternative::Null,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub training: Vec<Vec<f64>>,
    /// `stream[k - 1]` is the `k`-th monitoring observation.
    pub stream: Vec<Vec<f64>>,
    /// Observations `k > k_star` follow the post-change law; `k_star = M`
    /// under the null.
    pub k_star: usize,
}

/// A validated scenario with its covariance square roots computed once.
#[derive(Debug, Clone)]
pub struct Generator {
    spec: ScenarioSpec,
    laws: Vec<PostChange>,
    roots: Vec<Option<DMatrix<f64>>>,
}

fn decaying_cov_root(d: usize, decay: f64) -> DMatrix<f64> {
    let sigma = DMatrix::from_fn(d, d, |i, j| (-(i.abs_diff(j) as f64) / decay).exp());
    let eig = SymmetricEigen::new(sigma);
    let sq = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&sq) * eig.eigenvectors.transpose()
}

impl Generator {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let laws: Vec<PostChange> = match spec.alternative {
            Alternative::Mixed => [Alternative::Location, Alternative::Scale, Alternative::Tail]
                .iter()
                .filter_map(|a| PostChange::preset(*a, spec.strength))
                .collect(),
            a => PostChange::preset(a, spec.strength).into_iter().collect(),
        };
        let roots = laws
            .iter()
            .map(|law| match *law {
                PostChange::Covariance { decay } => Some(decaying_cov_root(spec.d, decay)),
                _ => None,
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            laws,
            roots,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    fn normal_vec(&self, rng: &mut StreamRng) -> Vec<f64> {
        (0..self.spec.d).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn post_change(&self, law: usize, rng: &mut StreamRng) -> Vec<f64> {
        match self.laws[law] {
            PostChange::Mean { mu } => self.normal_vec(rng).into_iter().map(|z| z + mu).collect(),
            PostChange::Covariance { .. } => {
                let z = DVector::from_vec(self.normal_vec(rng));
                let x = self.roots[law].as_ref().expect("root") * z;
                x.iter().copied().collect()
            }
            PostChange::StudentT { nu } => {
                let t = StudentT::new(nu).expect("nu > 0");
                let scale = ((nu - 2.0) / nu).sqrt();
                (0..self.spec.d).map(|_| t.sample(rng) * scale).collect()
            }
        }
    }

    /// Draw order: change time, law, training sample, monitoring stream.
    pub fn generate(&self, rng: &mut StreamRng) -> GeneratedData {
        let s = &self.spec;
        let (k_star, law) = if self.laws.is_empty() {
            (s.horizon, None)
        } else {
            let k = match s.k_star {
                KStar::Fixed(k) => k,
                KStar::Randomized => [10, s.m, 5 * s.m][rng.random_range(0..3)],
            };
            let law = if self.laws.len() > 1 {
                rng.random_range(0..self.laws.len())
            } else {
                0
            };
            (k, Some(law))
        };
        let training = (0..s.m).map(|_| self.normal_vec(rng)).collect();
        let stream = (1..=s.horizon)
            .map(|k| match law {
                Some(l) if k > k_star => self.post_change(l, rng),
                _ => self.normal_vec(rng),
            })
            .collect();
        GeneratedData {
            training,
            stream,
            k_star,
        }
    }
}

pub fn generate(spec: &ScenarioSpec, rng: &mut StreamRng) -> Result<GeneratedData> {
    Ok(Generator::new(spec)?.generate(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CusumVariant {
    /// First moments.
    Mean,
    /// Half-vectorized second moments `vech(x x^T)`.
    Vech,
}

impl CusumVariant {
    pub fn label(self) -> &'static str {
        match self {
            CusumVariant::Mean => "CUSUM",
            CusumVariant::Vech => "CUSUM-vech",
        }
    }

    fn features(self, x: &[f64]) -> Vec<f64> {
        match self {
            CusumVariant::Mean => x.to_vec(),
            CusumVariant::Vech => {
                let d = x.len();
                let mut y = Vec::with_capacity(d * (d + 1) / 2);
                for j in 0..d {
                    for i in j..d {
                        y.push(x[i] * x[j]);
                    }
                }
                y
            }
        }
    }
}

/// `Z(k) = || sum_{i<=k} Y_{m+i} - (k/m) sum_{i<=m} Y_i ||` for
/// `k = 1..=stream.len()`.
pub fn cusum_baseline(
    training: &[Vec<f64>],
    stream: &[Vec<f64>],
    variant: CusumVariant,
) -> Result<Vec<f64>> {
    let d = crate::error::sample_dim(training)?;
    let m = training.len() as f64;
    let p = variant.features(&vec![0.0; d]).len();
    let mut train_sum = vec![0.0; p];
    for x in training {
        for (s, y) in train_sum.iter_mut().zip(variant.features(x)) {
            *s += y;
        }
    }
    let mut run = vec![0.0; p];
    stream
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if x.len() != d {
                return Err(Error::Input(format!(
                    "observation {} has dimension {}, expected {d}",
                    i + 1,
                    x.len()
                )));
            }
            for (s, y) in run.iter_mut().zip(variant.features(x)) {
                *s += y;
            }
            let k = (i + 1) as f64;
            Ok(run
                .iter()
                .zip(&train_sum)
                .map(|(a, b)| (a - k / m * b).powi(2))
                .sum::<f64>()
                .sqrt())
        })
        .collect()
}

/// Boundary for the CUSUM baselines: `sqrt(m) (1 + k/m) (k/(m+k))^beta`.
pub fn cusum_boundary(k: usize, m: usize, beta: f64) -> f64 {
    let (k, m) = (k as f64, m as f64);
    m.sqrt() * (1.0 + k / m) * (k / (m + k)).powf(beta)
}

/// Default pilot size for limit critical values. A pilot of only `m` points
/// carries the O(1/m) upward bias of the Gram spectrum plus its sampling
/// noise into every cell, which makes small-m tables visibly conservative.
pub const DEFAULT_PILOT_M: usize = 2000;

/// Driver configuration for one table block (one scenario, many detectors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub scenario: ScenarioSpec,
    pub kernels: Vec<KernelSpec>,
    pub schemes: Vec<Scheme>,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub baselines: Vec<CusumVariant>,
    pub alpha: f64,
    #[serde(default)]
    pub calibration: Calibration,
    /// Re-calibrate every detector on null replications instead of using
    /// the simulated limit quantiles. Baselines are always calibrated this
    /// way.
    #[serde(default)]
    pub size_adjusted: bool,
    /// Size of the null pilot sample whose spectrum sets the limit critical
    /// values; `None` uses `max(m, DEFAULT_PILOT_M)`.
    #[serde(default)]
    pub pilot_m: Option<usize>,
}

impl TableConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.pilot_m.is_some_and(|p| p < 3) {
            return Err(Error::Config("pilot sample needs at least 3 points".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        for s in &self.schemes {
            if let Scheme::D3(w) = s {
                w.validate()?;
            }
        }
        for b in &self.betas {
            BoundaryParams::standard(*b).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub detector: String,
    pub kernel: String,
    pub beta: f64,
    pub critical_value: f64,
    pub reps: usize,
    /// Fraction of replications alarming before the horizon.
    pub rejection_rate: f64,
    /// Replications with an alarm after the change (delays are summarized
    /// over these only).
    pub detected: usize,
    pub median_delay: f64,
    pub delay_q1: f64,
    pub delay_q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: TableConfig,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn row(&self, detector: &str, kernel: &str, beta: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.detector == detector && r.kernel == kernel && r.beta == beta)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Input(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Vec<ReportRow>> {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let header = ["detector", "kernel", "beta", "cv", "reject", "detected", "med.delay", "q1", "q3"];
        let cells: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.detector.clone(),
                    r.kernel.clone(),
                    format!("{}", r.beta),
                    format!("{:.4}", r.critical_value),
                    format!("{:.3}", r.rejection_rate),
                    r.detected.to_string(),
                    format!("{:.1}", r.median_delay),
                    format!("{:.1}", r.delay_q1),
                    format!("{:.1}", r.delay_q3),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |fields: &[String]| {
            let parts: Vec<String> = fields
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(i, (f, w))| if i < 2 { format!("{f:<w$}") } else { format!("{f:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&header.map(String::from));
        for row in &cells {
            line(row);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    tau: Option<usize>,
    /// `kappa - k_star`.
    delay: Option<usize>,
    sup_ratio: f64,
}

/// Runs all `(scheme, beta)` cells of one kernel over a stream. Cells are
/// laid out scheme-major. Stops once every cell has a post-change alarm.
fn scan_kernel<K: Kernel>(
    state: &mut DetectorState<K>,
    data: &GeneratedData,
    horizon: usize,
    schemes: &[Scheme],
    betas: &[f64],
    cvs: &[f64],
) -> Result<Vec<Cell>> {
    let nb = betas.len();
    let bounds: Vec<BoundaryParams> = betas.iter().map(|b| BoundaryParams::standard(*b)).collect();
    let mut cells = vec![Cell::default(); schemes.len() * nb];
    let limit = data.stream.len().min(horizon - 1);
    let mut g = vec![0.0; nb];
    for obs in &data.stream[..limit] {
        state.update(obs)?;
        let k = state.k();
        if k < 2 {
            continue;
        }
        for (gb, b) in g.iter_mut().zip(&bounds) {
            *gb = boundary(k, state.m(), b);
        }
        for (si, scheme) in schemes.iter().enumerate() {
            let block = &mut cells[si * nb..(si + 1) * nb];
            if block.iter().all(|c| c.delay.is_some()) {
                continue;
            }
            let d = detector_value(state, scheme)?;
            for (bi, cell) in block.iter_mut().enumerate() {
                record(cell, d, g[bi], cvs[si * nb + bi], k, data.k_star);
            }
        }
        if cells.iter().all(|c| c.delay.is_some()) {
            break;
        }
    }
    Ok(cells)
}

fn record(cell: &mut Cell, stat: f64, bound: f64, cv: f64, k: usize, k_star: usize) {
    cell.sup_ratio = cell.sup_ratio.max(stat / bound);
    if stat > cv * bound {
        cell.tau.get_or_insert(k);
        if k > k_star && cell.delay.is_none() {
            cell.delay = Some(k - k_star);
        }
    }
}

fn scan_cusum(
    data: &GeneratedData,
    horizon: usize,
    variant: CusumVariant,
    betas: &[f64],
    cvs: &[f64],
) -> Result<Vec<Cell>> {
    let m = data.training.len();
    let limit = data.stream.len().min(horizon - 1);
    let z = cusum_baseline(&data.training, &data.stream[..limit], variant)?;
    let mut cells = vec![Cell::default(); betas.len()];
    for (i, zk) in z.iter().enumerate().skip(1) {
        let k = i + 1;
        for ((cell, beta), cv) in cells.iter_mut().zip(betas).zip(cvs) {
            record(cell, *zk, cusum_boundary(k, m, *beta), *cv, k, data.k_star);
        }
        if cells.iter().all(|c| c.delay.is_some()) {
            break;
        }
    }
    Ok(cells)
}

/// Per replication, kernel-detector cells followed by baseline cells.
fn simulate_cells(cfg: &TableConfig, scenario: &ScenarioSpec, cvs: &[f64], seed: u64) -> Result<Vec<Vec<Cell>>> {
    let gen = Generator::new(scenario)?;
    let per_kernel = cfg.schemes.len() * cfg.betas.len();
    let nb = cfg.betas.len();
    (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, &[rep as u64]);
            let data = gen.generate(&mut rng);
            let mut out = Vec::with_capacity(cvs.len());
            for (ki, spec) in cfg.kernels.iter().enumerate() {
                let kernel = spec.resolve(Some(&data.training))?;
                let mut state = DetectorState::new(kernel, &data.training)?;
                let cv = &cvs[ki * per_kernel..(ki + 1) * per_kernel];
                out.extend(scan_kernel(&mut state, &data, scenario.horizon, &cfg.schemes, &cfg.betas, cv)?);
            }
            let base = cfg.kernels.len() * per_kernel;
            for (vi, variant) in cfg.baselines.iter().enumerate() {
                let cv = &cvs[base + vi * nb..base + (vi + 1) * nb];
                out.extend(scan_cusum(&data, scenario.horizon, *variant, &cfg.betas, cv)?);
            }
            Ok(out)
        })
        .collect()
}

fn limit_kind(scheme: &Scheme) -> LimitKind {
    match scheme {
        Scheme::D1 => LimitKind::Gamma,
        Scheme::D2 => LimitKind::GammaBar,
        Scheme::D3(_) => LimitKind::GammaWindow,
    }
}

/// Limit-based critical values, one per `(kernel, scheme, beta)` cell, from
/// a pilot training sample drawn under the null.
pub fn asymptotic_critical_values(cfg: &TableConfig) -> Result<Vec<f64>> {
    let s = &cfg.scenario;
    let gen = Generator::new(&ScenarioSpec {
        m: cfg.pilot_m.unwrap_or(s.m.max(DEFAULT_PILOT_M)),
        ..s.null()
    })?;
    let mut rng = stream_rng(s.seed, &[label_key("pilot")]);
    let pilot = gen.generate(&mut rng).training;
    let mut cvs = Vec::new();
    for spec in &cfg.kernels {
        let kernel = spec.resolve(Some(&pilot))?;
        let spectrum = estimate_spectrum(&kernel, &pilot)?;
        for scheme in &cfg.schemes {
            let window = match scheme {
                Scheme::D3(w) => Some(*w),
                _ => None,
            };
            for beta in &cfg.betas {
                cvs.push(calibrate(
                    limit_kind(scheme),
                    &spectrum,
                    s.span(),
                    *beta,
                    window,
                    None,
                    cfg.alpha,
                    &cfg.calibration,
                )?);
            }
        }
    }
    Ok(cvs)
}

/// Per null replication, `sup_k D(k) / g(k)` of every cell (kernel cells
/// scheme-major, then baselines), on a seed family separate from the main run.
pub fn null_sup_ratios(cfg: &TableConfig) -> Result<Vec<Vec<f64>>> {
    let s = &cfg.scenario;
    let n = cfg.kernels.len() * cfg.schemes.len() * cfg.betas.len() + cfg.baselines.len() * cfg.betas.len();
    let seed = derive_seed(s.seed, &[label_key("null-pilot")]);
    let cells = simulate_cells(cfg, &s.null(), &vec![f64::INFINITY; n], seed)?;
    Ok(cells
        .into_iter()
        .map(|rep| rep.into_iter().map(|c| c.sup_ratio).collect())
        .collect())
}

/// Empirical critical values from null replications (size adjustment).
pub fn null_critical_values(cfg: &TableConfig) -> Result<Vec<f64>> {
    let sups = null_sup_ratios(cfg)?;
    let n = sups.first().map_or(0, Vec::len);
    Ok((0..n)
        .map(|i| {
            let mut col: Vec<f64> = sups.iter().map(|rep| rep[i]).collect();
            sort_floats(&mut col);
            order_statistic_quantile(&col, 1.0 - cfg.alpha)
        })
        .collect())
}

pub fn run_table(cfg: &TableConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let s = &cfg.scenario;
    if s.reps == 0 {
        return Ok(ExperimentReport {
            config: cfg.clone(),
            rows: Vec::new(),
        });
    }
    let n_kernel = cfg.kernels.len() * cfg.schemes.len() * cfg.betas.len();
    let n_base = cfg.baselines.len() * cfg.betas.len();
    let mut cvs = if cfg.size_adjusted || n_base > 0 {
        null_critical_values(cfg)?
    } else {
        Vec::new()
    };
    if !cfg.size_adjusted {
        let asym = asymptotic_critical_values(cfg)?;
        if cvs.is_empty() {
            cvs = asym;
        } else {
            cvs[..n_kernel].copy_from_slice(&asym);
        }
    }
    let cells = simulate_cells(cfg, s, &cvs, s.seed)?;

    let mut labels = Vec::new();
    for spec in &cfg.kernels {
        for scheme in &cfg.schemes {
            for beta in &cfg.betas {
                labels.push((scheme.label().to_string(), spec.label(), *beta));
            }
        }
    }
    for v in &cfg.baselines {
        for beta in &cfg.betas {
            labels.push((v.label().to_string(), "-".to_string(), *beta));
        }
    }
    let rows = labels
        .into_iter()
        .enumerate()
        .map(|(i, (detector, kernel, beta))| {
            let alarms = cells.iter().filter(|rep| rep[i].tau.is_some()).count();
            let mut delays: Vec<f64> = cells
                .iter()
                .filter_map(|rep| rep[i].delay.map(|k| k as f64))
                .collect();
            sort_floats(&mut delays);
            let q = |p| if delays.is_empty() { f64::NAN } else { interp_quantile(&delays, p) };
            ReportRow {
                detector,
                kernel,
                beta,
                critical_value: cvs[i],
                reps: s.reps,
                rejection_rate: alarms as f64 / s.reps as f64,
                detected: delays.len(),
                median_delay: q(0.5),
                delay_q1: q(0.25),
                delay_q3: q(0.75),
            }
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
    })
}
