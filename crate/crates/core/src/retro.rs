//! Retrospective test for a change inside the training sample.

use serde::{Deserialize, Serialize};

use crate::error::{sample_dim, Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::limits::{calibrate, Calibration, LimitKind, Span};
use crate::numeric::{pairs, NeumaierSum};
use crate::spectrum::estimate_spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetroResult {
    #[serde(rename = "stat")]
    pub statistic: f64,
    /// Location of the maximum; a heuristic break-date estimate.
    #[serde(rename = "k_hat")]
    pub argmax_k: usize,
    /// `NaN` until a critical value is attached.
    #[serde(rename = "cv")]
    pub critical_value: f64,
    pub reject: bool,
    pub zeta: f64,
}

/// Weight `(t(1-t))^zeta`.
pub fn weight(t: f64, zeta: f64) -> f64 {
    if zeta == 0.0 {
        1.0
    } else {
        (t * (1.0 - t)).powf(zeta)
    }
}

/// Two-sample contrast between `X_1..X_k` and `X_{k+1}..X_m` for
/// `k = 2..=m-2`; entry `k - 2` of the result.
pub fn contrast_sequence<K: Kernel>(kernel: &K, sample: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = sample.len();
    if m < 5 {
        return Err(Error::Input(format!("retrospective test needs m >= 5, got {m}")));
    }
    sample_dim(sample)?;
    // upper[j] = sum_{i<j} h(X_i, X_j), lower[i] = sum_{j>i} h(X_i, X_j)
    let mut upper = vec![NeumaierSum::new(); m];
    let mut lower = vec![NeumaierSum::new(); m];
    for j in 1..m {
        for i in 0..j {
            let h = kernel.eval(&sample[i], &sample[j]);
            upper[j].add(h);
            lower[i].add(h);
        }
    }
    let upper: Vec<f64> = upper.iter().map(NeumaierSum::value).collect();
    let lower: Vec<f64> = lower.iter().map(NeumaierSum::value).collect();
    // Each block sum is accumulated directly rather than recovered as a
    // difference of totals, which would cost O(m^2) ulps near the edges.
    let mut within2 = vec![0.0; m + 1];
    let mut acc = NeumaierSum::new();
    for i in (0..m).rev() {
        acc.add(lower[i]);
        within2[i] = acc.value();
    }
    let mut within1 = NeumaierSum::new();
    let mut cross = NeumaierSum::new();
    let mut out = Vec::with_capacity(m - 3);
    for k in 1..=m - 2 {
        // moving X_k (index k-1) from the second block to the first
        within1.add(upper[k - 1]);
        cross.add(lower[k - 1]);
        cross.add(-upper[k - 1]);
        if k < 2 {
            continue;
        }
        let (kf, rest) = (k as f64, (m - k) as f64);
        out.push(2.0 * cross.value() / (kf * rest) - within1.value() / pairs(k) - within2[k] / pairs(m - k));
    }
    Ok(out)
}

/// `sup_k |m t^2 (1-t)^2 R(k)| / q(t)` over `k = 2..=m-2`, `t = k/m`.
pub fn retro_statistic_with<K: Kernel>(kernel: &K, sample: &[Vec<f64>], zeta: f64) -> Result<RetroResult> {
    if !(zeta < 1.0) {
        return Err(Error::Config(format!("zeta = {zeta} must be < 1")));
    }
    let r = contrast_sequence(kernel, sample)?;
    let m = sample.len() as f64;
    let (mut best, mut arg) = (-1.0, 2);
    for (i, rk) in r.iter().enumerate() {
        let k = i + 2;
        let t = k as f64 / m;
        let v = (m * t * t * (1.0 - t) * (1.0 - t) * rk).abs() / weight(t, zeta);
        if v > best {
            best = v;
            arg = k;
        }
    }
    Ok(RetroResult {
        statistic: best,
        argmax_k: arg,
        critical_value: f64::NAN,
        reject: false,
        zeta,
    })
}

/// Statistic only; median bandwidths are fixed on `sample` itself.
pub fn retro_statistic(spec: &KernelSpec, sample: &[Vec<f64>], zeta: f64) -> Result<RetroResult> {
    let kernel = spec.resolve(Some(sample))?;
    retro_statistic_with(&kernel, sample, zeta)
}

/// Full test: spectrum from the whole sample, bridge-limit critical value at
/// level `alpha`.
pub fn retro_test(
    spec: &KernelSpec,
    sample: &[Vec<f64>],
    zeta: f64,
    alpha: f64,
    cal: &Calibration,
) -> Result<RetroResult> {
    let kernel = spec.resolve(Some(sample))?;
    let mut res = retro_statistic_with(&kernel, sample, zeta)?;
    let spectrum = estimate_spectrum(&kernel, sample)?;
    let cv = calibrate(LimitKind::Bridge, &spectrum, Span::Sample { m: sample.len() }, 0.0, None, Some(zeta), alpha, cal)?;
    res.critical_value = cv;
    res.reject = res.statistic > cv;
    Ok(res)
}
