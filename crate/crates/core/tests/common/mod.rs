#![allow(dead_code)]

use kmon_core::rng::stream_rng;
use kmon_core::{Kernel, KernelSpec};
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, &[0xabc]);
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

pub fn all_kernels() -> Vec<KernelSpec> {
    use kmon_core::kernels::{Bandwidth, PsdKernelSpec};
    vec![
        KernelSpec::sqrt_l1(),
        KernelSpec::euclidean(),
        KernelSpec::gaussian_median(),
        KernelSpec::Grothendieck,
        KernelSpec::PsdDerivedMetric {
            base: PsdKernelSpec::Gaussian { a: Bandwidth::Fixed(1.3) },
            s: 0.25,
        },
    ]
}

/// `h(x, y) = f(x) + f(y)`; every detector must vanish on it.
pub struct Additive;

impl Kernel for Additive {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let f = |v: &[f64]| v.iter().enumerate().map(|(i, a)| (a * (i + 1) as f64).sin() + a * a).sum::<f64>();
        f(x) + f(y)
    }
}

fn pair_sum<K: Kernel>(h: &K, pts: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            s += h.eval(pts[i], pts[j]);
        }
    }
    s
}

fn binom2(n: usize) -> f64 {
    (n * (n - 1)) as f64 / 2.0
}

/// Two-sample contrast between blocks `a` and `b`:
/// `2/(|a||b|) sum h(a_i, b_j) - mean_pairs(a) - mean_pairs(b)`.
pub fn contrast<K: Kernel>(h: &K, a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let mut cross = 0.0;
    for x in a {
        for y in b {
            cross += h.eval(x, y);
        }
    }
    2.0 * cross / (a.len() * b.len()) as f64 - pair_sum(h, a) / binom2(a.len()) - pair_sum(h, b) / binom2(b.len())
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

/// Reference detectors evaluated from scratch at monitoring time `k`
/// (observations `stream[..k]`).
pub fn oracle_d1<K: Kernel>(h: &K, training: &[Vec<f64>], stream: &[Vec<f64>], k: usize) -> f64 {
    let m = training.len() as f64;
    (k * k) as f64 * contrast(h, &refs(training), &refs(&stream[..k])).abs() / m
}

pub fn oracle_d2<K: Kernel>(h: &K, training: &[Vec<f64>], stream: &[Vec<f64>], k: usize) -> f64 {
    let m = training.len() as f64;
    (0..k)
        .map(|r| {
            let start = r.min(k - 2);
            let u = contrast(h, &refs(training), &refs(&stream[start..k]));
            ((k - r) * (k - r)) as f64 * u.abs() / m
        })
        .fold(0.0, f64::max)
}

pub fn oracle_d3<K: Kernel>(h: &K, training: &[Vec<f64>], stream: &[Vec<f64>], k: usize, cw: f64, bw: f64) -> f64 {
    let m = training.len();
    let excess = (k as f64 - cw * m as f64).max(0.0);
    let w = (cw * m as f64 + bw * excess + 1e-9).floor() as usize;
    if k <= w {
        return oracle_d1(h, training, stream, k);
    }
    let r = k - w;
    let mut first: Vec<&[f64]> = refs(training);
    first.extend(refs(&stream[..r]));
    let u = contrast(h, &first, &refs(&stream[r..k]));
    (w * w) as f64 * u.abs() / m as f64
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}
