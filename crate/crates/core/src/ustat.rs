//! Two-sample U-statistics between a training block and the monitored
//! stream, maintained incrementally.
//!
//! Monitoring indices are 1-based: after `k` updates the stream holds
//! observations `1..=k`. With `h` the kernel, the state keeps
//!
//! * `T    = sum_{i<j<=m} h(X_i, X_j)` over training pairs,
//! * `C[t] = sum_{i<=m} sum_{j<=t} h(X_i, Y_j)` for `t = 0..=k`,
//! * `A[j] = sum_{i<j} h(Y_i, Y_j)` and its prefix `Q[t] = sum_{j<=t} A[j]`,
//! * `S[r] = sum_{r<i<j<=k} h(Y_i, Y_j)` for `r = 0..k`,
//!
//! which is enough to evaluate every detector in O(1) (Page: O(k)) per step.
//! `S` is refreshed from the newest kernel row on each update, so memory is
//! O(m + k) rather than a triangular table.

use serde::{Deserialize, Serialize};

use crate::error::{sample_dim, Error, Result};
use crate::kernels::Kernel;
use crate::numeric::{csum, pairs, NeumaierSum};

/// Parameters of the moving window `w = floor(c_w m + b_w ((k - c_w m) v 0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub cw: f64,
    pub bw: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self { cw: 1.0, bw: 0.5 }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cw >= 0.0 && self.cw.is_finite()) {
            return Err(Error::Config(format!("c_w = {} must be >= 0", self.cw)));
        }
        if !(0.0..=1.0).contains(&self.bw) {
            return Err(Error::Config(format!("b_w = {} must lie in [0, 1]", self.bw)));
        }
        Ok(())
    }

    /// Window length at monitoring step `k`.
    pub fn length(&self, k: usize, m: usize) -> usize {
        let base = self.cw * m as f64;
        let w = base + self.bw * (k as f64 - base).max(0.0);
        (w + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `((k/m) / (1 + k/m))^beta (1 + k/m)^2`.
    Standard,
    /// `(M/m) (k/M)^beta`, for horizons short relative to `m`.
    ShortHorizon { horizon: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub beta: f64,
    pub mode: BoundaryMode,
}

impl BoundaryParams {
    pub fn standard(beta: f64) -> Self {
        Self {
            beta,
            mode: BoundaryMode::Standard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta = {} not in [0, 1)", self.beta)));
        }
        if let BoundaryMode::ShortHorizon { horizon } = self.mode {
            if horizon < 2 {
                return Err(Error::Config("short-horizon boundary needs M >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Boundary function `g_m(k)`.
pub fn boundary(k: usize, m: usize, p: &BoundaryParams) -> f64 {
    let (k, mf) = (k as f64, m as f64);
    match p.mode {
        BoundaryMode::Standard => {
            let x = k / mf;
            (x / (1.0 + x)).powf(p.beta) * (1.0 + x) * (1.0 + x)
        }
        BoundaryMode::ShortHorizon { horizon } => {
            let big_m = horizon as f64;
            (big_m / mf) * (k / big_m).powf(p.beta)
        }
    }
}

/// Applies the small-segment convention `(r, k) -> (r min (k-2), k max 2)`.
pub fn clamp_segment(r: usize, k: usize) -> (usize, usize) {
    let k = k.max(2);
    (r.min(k - 2), k)
}

/// Direct evaluation of `U_m(h; r, k)` from raw samples:
///
/// `2/((k-r) m) sum_{i<=m} sum_{r<j<=k} h(X_i, Y_j) - C(m,2)^{-1} sum_{i<j<=m} h(X_i, X_j)
///  - C(k-r,2)^{-1} sum_{r<i<j<=k} h(Y_i, Y_j)`.
///
/// This is the O((m + k)^2) reference the incremental state is checked against.
pub fn u_stat_batch<K: Kernel>(
    kernel: &K,
    training: &[Vec<f64>],
    monitoring: &[Vec<f64>],
    r: usize,
    k: usize,
) -> Result<f64> {
    let d = sample_dim(training)?;
    if sample_dim(monitoring)? != d {
        return Err(Error::Input("training and monitoring dimensions differ".into()));
    }
    let m = training.len();
    if m < 2 {
        return Err(Error::Input("training sample needs at least 2 points".into()));
    }
    let (r, k) = clamp_segment(r, k);
    if k > monitoring.len() {
        return Err(Error::Input(format!(
            "k = {k} exceeds the {} monitoring observations",
            monitoring.len()
        )));
    }
    let seg = &monitoring[r..k];
    let n = seg.len();
    let mut cross = NeumaierSum::new();
    for x in training {
        for y in seg {
            cross.add(kernel.eval(x, y));
        }
    }
    let within = |s: &[Vec<f64>]| {
        let mut acc = NeumaierSum::new();
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                acc.add(kernel.eval(&s[i], &s[j]));
            }
        }
        acc.value()
    };
    Ok(2.0 * cross.value() / (n as f64 * m as f64) - within(training) / pairs(m)
        - within(seg) / pairs(n))
}

/// Incremental sufficient statistics for one monitored stream.
#[derive(Debug, Clone)]
pub struct DetectorState<K> {
    kernel: K,
    dim: usize,
    m: usize,
    points: Vec<f64>,
    training_pair_sum: f64,
    cross_prefix: Vec<f64>,
    cross_acc: NeumaierSum,
    mon_row: Vec<f64>,
    mon_pair_prefix: Vec<f64>,
    pair_acc: NeumaierSum,
    page_tail: Vec<f64>,
    max_page_lag: Option<usize>,
    row_buf: Vec<f64>,
    kernel_evals: u64,
}

impl<K: Kernel> DetectorState<K> {
    pub fn new(kernel: K, training: &[Vec<f64>]) -> Result<Self> {
        let dim = sample_dim(training)?;
        let m = training.len();
        if m < 2 {
            return Err(Error::Input("training sample needs at least 2 points".into()));
        }
        let points: Vec<f64> = training.iter().flatten().copied().collect();
        let mut acc = NeumaierSum::new();
        let mut evals = 0u64;
        for i in 0..m {
            for j in (i + 1)..m {
                acc.add(kernel.eval(&points[i * dim..(i + 1) * dim], &points[j * dim..(j + 1) * dim]));
                evals += 1;
            }
        }
        Ok(Self {
            kernel,
            dim,
            m,
            points,
            training_pair_sum: acc.value(),
            cross_prefix: vec![0.0],
            cross_acc: NeumaierSum::new(),
            mon_row: Vec::new(),
            mon_pair_prefix: vec![0.0],
            pair_acc: NeumaierSum::new(),
            page_tail: Vec::new(),
            max_page_lag: None,
            row_buf: Vec::new(),
            kernel_evals: evals,
        })
    }

    /// Restricts the Page maximum to `r >= k - lag`. `None` keeps every `r`.
    pub fn with_max_page_lag(mut self, lag: Option<usize>) -> Self {
        self.max_page_lag = lag;
        self
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of monitoring observations absorbed so far.
    pub fn k(&self) -> usize {
        self.mon_row.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn training_pair_sum(&self) -> f64 {
        self.training_pair_sum
    }

    /// `C[0..=k]`.
    pub fn cross_prefix(&self) -> &[f64] {
        &self.cross_prefix
    }

    /// `A[1..=k]`, stored 0-based.
    pub fn mon_row(&self) -> &[f64] {
        &self.mon_row
    }

    /// `Q[0..=k]`.
    pub fn mon_pair_prefix(&self) -> &[f64] {
        &self.mon_pair_prefix
    }

    /// `S[0..k]`.
    pub fn page_tail(&self) -> &[f64] {
        &self.page_tail
    }

    /// Total kernel evaluations performed, including the training block.
    pub fn kernel_evals(&self) -> u64 {
        self.kernel_evals
    }

    fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Appends the next monitoring observation (`m + k` kernel evaluations).
    pub fn update(&mut self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.dim {
            return Err(Error::Input(format!(
                "observation has dimension {}, expected {}",
                obs.len(),
                self.dim
            )));
        }
        let k = self.k();
        let m = self.m;
        let train_row = csum((0..m).map(|i| self.kernel.eval(self.point(i), obs)));

        let mut row = std::mem::take(&mut self.row_buf);
        row.clear();
        row.extend((0..k).map(|i| self.kernel.eval(self.point(m + i), obs)));
        let a = csum(row.iter().copied());
        self.kernel_evals += (m + k) as u64;

        self.cross_acc.add(train_row);
        self.cross_prefix.push(self.cross_acc.value());
        self.pair_acc.add(a);
        self.mon_row.push(a);
        self.mon_pair_prefix.push(self.pair_acc.value());

        let mut suffix = 0.0;
        for r in (0..k).rev() {
            suffix += row[r];
            self.page_tail[r] += suffix;
        }
        self.page_tail.push(0.0);

        self.row_buf = row;
        self.points.extend_from_slice(obs);
        Ok(())
    }

    fn require_k(&self) -> Result<usize> {
        let k = self.k();
        if k < 2 {
            return Err(Error::Contract(format!(
                "detectors need at least 2 monitoring observations, have {k}"
            )));
        }
        Ok(k)
    }

    /// `U_m(h; r, k)` at the current `k`, with the small-segment clamp.
    pub fn u_stat(&self, r: usize) -> Result<f64> {
        let k = self.require_k()?;
        Ok(self.u_unchecked(clamp_segment(r, k).0, k))
    }

    #[inline]
    fn u_unchecked(&self, r: usize, k: usize) -> f64 {
        let n = k - r;
        let cross = self.cross_prefix[k] - self.cross_prefix[r];
        2.0 * cross / (n as f64 * self.m as f64)
            - self.training_pair_sum / pairs(self.m)
            - self.page_tail[r] / pairs(n)
    }

    /// CUSUM detector `m^{-1} k^2 |U_m(h; k)|`.
    pub fn d1(&self) -> Result<f64> {
        let k = self.require_k()?;
        Ok(self.d1_unchecked(k))
    }

    fn d1_unchecked(&self, k: usize) -> f64 {
        let kf = k as f64;
        kf * kf * self.u_unchecked(0, k).abs() / self.m as f64
    }

    /// Page detector `m^{-1} max_{0<=r<k} (k-r)^2 |U_m(h; r, k)|`.
    pub fn d2(&self) -> Result<f64> {
        let k = self.require_k()?;
        let lo = match self.max_page_lag {
            Some(lag) => k.saturating_sub(lag.max(1)),
            None => 0,
        };
        let mut best = 0.0f64;
        for r in lo..k {
            let (rc, _) = clamp_segment(r, k);
            let n = (k - r) as f64;
            best = best.max(n * n * self.u_unchecked(rc, k).abs());
        }
        Ok(best / self.m as f64)
    }

    /// Repurposing detector `m^{-1} (k ^ w)^2 |U~_m(h, w; k)|`: once `k`
    /// exceeds the window `w`, the oldest `r = k - w` monitoring points join
    /// the training block.
    pub fn d3(&self, window: &WindowParams) -> Result<f64> {
        window.validate()?;
        let k = self.require_k()?;
        let w = window.length(k, self.m);
        if w < 2 {
            return Err(Error::Config(format!("window length {w} < 2 at k = {k}")));
        }
        if k <= w {
            return Ok(self.d1_unchecked(k));
        }
        let r = k - w;
        let n1 = self.m + r;
        let (c, q, s) = (&self.cross_prefix, &self.mon_pair_prefix, &self.page_tail);
        let train_pairs = self.training_pair_sum + c[r] + q[r];
        let cross = (c[k] - c[r]) + (q[k] - q[r] - s[r]);
        let u = 2.0 * cross / (w as f64 * n1 as f64) - train_pairs / pairs(n1) - s[r] / pairs(w);
        let wf = w as f64;
        Ok(wf * wf * u.abs() / self.m as f64)
    }

    /// Recomputes every aggregate from the stored points.
    pub fn rebuild(&self) -> Aggregates {
        let (m, k) = (self.m, self.k());
        let h = |i: usize, j: usize| self.kernel.eval(self.point(i), self.point(j));
        let training_pair_sum = csum((0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).map(|(i, j)| h(i, j)));
        let mut cross_prefix = vec![0.0];
        let mut mon_row = Vec::with_capacity(k);
        let mut mon_pair_prefix = vec![0.0];
        for t in 1..=k {
            cross_prefix.push(csum((0..m).flat_map(|i| (1..=t).map(move |j| (i, j))).map(|(i, j)| h(i, m + j - 1))));
            mon_row.push(csum((1..t).map(|i| h(m + i - 1, m + t - 1))));
            mon_pair_prefix.push(csum(mon_row.iter().copied()));
        }
        let page_tail = (0..k)
            .map(|r| {
                csum(((r + 1)..=k).flat_map(|i| ((i + 1)..=k).map(move |j| (i, j))).map(|(i, j)| h(m + i - 1, m + j - 1)))
            })
            .collect();
        Aggregates {
            training_pair_sum,
            cross_prefix,
            mon_row,
            mon_pair_prefix,
            page_tail,
        }
    }

    /// Current aggregates as maintained incrementally.
    pub fn aggregates(&self) -> Aggregates {
        Aggregates {
            training_pair_sum: self.training_pair_sum,
            cross_prefix: self.cross_prefix.clone(),
            mon_row: self.mon_row.clone(),
            mon_pair_prefix: self.mon_pair_prefix.clone(),
            page_tail: self.page_tail.clone(),
        }
    }
}

/// Snapshot of the sums kept by [`DetectorState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub training_pair_sum: f64,
    pub cross_prefix: Vec<f64>,
    pub mon_row: Vec<f64>,
    pub mon_pair_prefix: Vec<f64>,
    pub page_tail: Vec<f64>,
}

impl Aggregates {
    /// Largest relative deviation between two snapshots (absolute below 1).
    pub fn max_rel_diff(&self, other: &Aggregates) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let vs = |x: &[f64], y: &[f64]| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max)
        };
        rel(self.training_pair_sum, other.training_pair_sum)
            .max(vs(&self.cross_prefix, &other.cross_prefix))
            .max(vs(&self.mon_row, &other.mon_row))
            .max(vs(&self.mon_pair_prefix, &other.mon_pair_prefix))
            .max(vs(&self.page_tail, &other.page_tail))
    }
}
