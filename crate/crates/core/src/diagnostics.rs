//! Randomised test for the existence of moments (null: `E|X|^k = inf`).

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::chi2_1_upper;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTestResult {
    pub order_k: u32,
    pub mu_k: f64,
    /// `exp(mu_k) - 1`; may overflow to infinity.
    pub psi_k: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub threshold: f64,
    pub decide_infinite_moment: bool,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
}

/// How vector observations are reduced to scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    #[default]
    Norm,
    Coordinate(usize),
}

pub fn scalarize(sample: &[Vec<f64>], how: Scalarization) -> Result<Vec<f64>> {
    sample
        .iter()
        .enumerate()
        .map(|(i, x)| match how {
            Scalarization::Norm => Ok(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            Scalarization::Coordinate(c) => x.get(c).copied().ok_or_else(|| {
                Error::Input(format!("row {} has no coordinate {c}", i + 1))
            }),
        })
        .collect()
}

/// `mean|X|^k / (mean X^2)^{k/2}`, computed on `X / sqrt(mean X^2)`.
pub fn moment_ratio(sample: &[f64], order_k: u32) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Input("empty sample".into()));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite observation".into()));
    }
    let n = sample.len() as f64;
    let m2 = sample.iter().map(|x| x * x).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(Error::Input("all-zero sample: moment ratio undefined".into()));
    }
    let s = m2.sqrt();
    Ok(sample.iter().map(|x| (x / s).abs().powi(order_k as i32)).sum::<f64>() / n)
}

/// Fraction of `b` randomised statistics `Theta` not exceeding the upper-`alpha`
/// chi-square(1) quantile. Replication `i` uses `stream_rng(seed, [i])`.
pub fn randomised_confidence(psi: f64, alpha: f64, b: usize, n: usize, seed: u64) -> f64 {
    let c_alpha = chi2_1_upper(alpha);
    // psi^{1/2} xi <= u  <=>  xi <= u / psi^{1/2}
    let cut = std::f64::consts::SQRT_2 / psi.sqrt();
    let scale = 2.0 / (n as f64).sqrt();
    let hits = (0..b)
        .into_par_iter()
        .filter(|i| {
            let mut rng = stream_rng(seed, &[*i as u64]);
            let (mut up, mut down) = (0usize, 0usize);
            for _ in 0..n {
                let xi: f64 = StandardNormal.sample(&mut rng);
                up += (xi <= cut) as usize;
                down += (xi <= -cut) as usize;
            }
            let half = n as f64 / 2.0;
            let v_up = scale * (up as f64 - half);
            let v_down = scale * (down as f64 - half);
            0.5 * (v_up * v_up + v_down * v_down) <= c_alpha
        })
        .count();
    hits as f64 / b as f64
}

/// Decides for an infinite `k`-th moment iff
/// `Q >= (1 - alpha) - sqrt(alpha (1 - alpha)) / B^{1/4}`, with `N = B`
/// artificial draws per replication.
pub fn moment_test(sample: &[f64], order_k: u32, alpha: f64, b: usize, seed: u64) -> Result<MomentTestResult> {
    if order_k < 1 {
        return Err(Error::Config("moment order must be >= 1".into()));
    }
    if b < 100 {
        return Err(Error::Config(format!("B = {b} < 100")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} not in (0, 1)")));
    }
    let mu = moment_ratio(sample, order_k)?;
    let psi = mu.exp_m1();
    let q = randomised_confidence(psi, alpha, b, b, seed);
    let threshold = (1.0 - alpha) - (alpha * (1.0 - alpha)).sqrt() / (b as f64).powf(0.25);
    Ok(MomentTestResult {
        order_k,
        mu_k: mu,
        psi_k: psi,
        q,
        threshold,
        decide_infinite_moment: q >= threshold,
        b,
        alpha,
    })
}
