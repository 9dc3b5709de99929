//! Symmetric kernels `h(x, y)` on real vectors.
//!
//! A [`KernelSpec`] is the declarative (serializable) description; it may
//! leave the Gaussian bandwidth as `"median"`, to be fixed from a training
//! sample. [`KernelSpec::resolve`] turns it into a [`ResolvedKernel`], which
//! evaluates without further checks and implements [`Kernel`].

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{check_dims, sample_dim, Error, Result};

/// A symmetric pairwise function. Implementors must satisfy
/// `eval(x, y) == eval(y, x)`.
pub trait Kernel: Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
}

impl<K: Kernel + ?Sized> Kernel for &K {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
}

impl<K: Kernel + ?Sized> Kernel for Box<K> {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
}

/// Adapter turning a closure into a [`Kernel`].
#[derive(Clone, Copy)]
pub struct FnKernel<F>(pub F);

impl<F> Kernel for FnKernel<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
{
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.0)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
}

/// Gaussian bandwidth: a fixed positive value or the median heuristic.
/// Serializes as a number or the string `"median"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Fixed(a) => s.serialize_f64(*a),
            Bandwidth::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bandwidth;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive number or \"median\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Bandwidth, E> {
                Ok(Bandwidth::Fixed(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Bandwidth, E> {
                Ok(Bandwidth::Fixed(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Bandwidth, E> {
                Ok(Bandwidth::Fixed(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Bandwidth, E> {
                if v.eq_ignore_ascii_case("median") {
                    Ok(Bandwidth::Median)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Positive semidefinite base kernels `K` used to build metrics
/// `[K(x,x) + K(y,y) - 2K(x,y)]^s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsdKernelSpec {
    /// `exp(-|x-y|^2 / (2 a^2))`.
    Gaussian { a: Bandwidth },
    /// Finite-rank kernel `sum_l lambda_l <v_l, x> <v_l, y>` with
    /// `lambda_l >= 0`. Intended as a test double.
    EigenTable {
        lambdas: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `|x - y|^eta` in the chosen norm, `eta` in (0, 2).
    Energy {
        eta: f64,
        #[serde(default)]
        norm: Norm,
    },
    /// `[1 - exp(-|x-y|_2^2 / (2 a^2))]^{1/2}`.
    #[serde(rename = "gaussian")]
    GaussianDerived { a: Bandwidth },
    /// Grothendieck divergence kernel, see [`grothendieck_psi`].
    Grothendieck,
    /// `[K(x,x) + K(y,y) - 2 K(x,y)]^s`, `s` in (0, 1/2].
    #[serde(rename = "psd_metric")]
    PsdDerivedMetric { base: PsdKernelSpec, s: f64 },
}

impl KernelSpec {
    /// `|x - y|_1^{1/2}`.
    pub fn sqrt_l1() -> Self {
        KernelSpec::Energy {
            eta: 0.5,
            norm: Norm::L1,
        }
    }

    /// Euclidean distance, the classical energy-distance kernel.
    pub fn euclidean() -> Self {
        KernelSpec::Energy {
            eta: 1.0,
            norm: Norm::L2,
        }
    }

    /// Gaussian-derived metric with the median-distance bandwidth.
    pub fn gaussian_median() -> Self {
        KernelSpec::GaussianDerived {
            a: Bandwidth::Median,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            KernelSpec::Energy { eta, norm } => {
                let n = match norm {
                    Norm::L1 => "l1",
                    Norm::L2 => "l2",
                };
                format!("energy({n},{eta})")
            }
            KernelSpec::GaussianDerived { a: Bandwidth::Median } => "gaussian(median)".into(),
            KernelSpec::GaussianDerived {
                a: Bandwidth::Fixed(a),
            } => format!("gaussian({a})"),
            KernelSpec::Grothendieck => "grothendieck".into(),
            KernelSpec::PsdDerivedMetric { s, .. } => format!("psd_metric(s={s})"),
        }
    }

    pub fn needs_training(&self) -> bool {
        match self {
            KernelSpec::GaussianDerived { a } => *a == Bandwidth::Median,
            KernelSpec::PsdDerivedMetric {
                base: PsdKernelSpec::Gaussian { a },
                ..
            } => *a == Bandwidth::Median,
            _ => false,
        }
    }

    /// Checks parameter ranges. Unresolved median bandwidths are accepted.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Energy { eta, .. } => {
                if !(*eta > 0.0 && *eta < 2.0) {
                    return Err(Error::Config(format!("energy exponent {eta} not in (0, 2)")));
                }
            }
            KernelSpec::GaussianDerived { a } => check_bandwidth(a)?,
            KernelSpec::Grothendieck => {}
            KernelSpec::PsdDerivedMetric { base, s } => {
                if !(*s > 0.0 && *s <= 0.5) {
                    return Err(Error::Config(format!("metric exponent {s} not in (0, 1/2]")));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Validates the spec and fixes any median bandwidth from `training`.
    pub fn resolve(&self, training: Option<&[Vec<f64>]>) -> Result<ResolvedKernel> {
        self.validate()?;
        let fix = |a: &Bandwidth| -> Result<f64> {
            match a {
                Bandwidth::Fixed(v) => Ok(*v),
                Bandwidth::Median => median_bandwidth(training.ok_or_else(|| {
                    Error::Config("median bandwidth requires a training sample".into())
                })?),
            }
        };
        let (spec, eval) = match self {
            KernelSpec::Energy { eta, norm } => (
                self.clone(),
                Eval::Energy {
                    eta: *eta,
                    norm: *norm,
                },
            ),
            KernelSpec::GaussianDerived { a } => {
                let a = fix(a)?;
                (
                    KernelSpec::GaussianDerived {
                        a: Bandwidth::Fixed(a),
                    },
                    Eval::Gaussian {
                        inv_two_a2: 1.0 / (2.0 * a * a),
                    },
                )
            }
            KernelSpec::Grothendieck => (self.clone(), Eval::Grothendieck),
            KernelSpec::PsdDerivedMetric { base, s } => {
                let (base_spec, base_eval) = match base {
                    PsdKernelSpec::Gaussian { a } => {
                        let a = fix(a)?;
                        (
                            PsdKernelSpec::Gaussian {
                                a: Bandwidth::Fixed(a),
                            },
                            PsdEval::Gaussian {
                                inv_two_a2: 1.0 / (2.0 * a * a),
                            },
                        )
                    }
                    PsdKernelSpec::EigenTable {
                        lambdas,
                        directions,
                    } => (
                        base.clone(),
                        PsdEval::Table {
                            lambdas: lambdas.clone(),
                            directions: directions.clone(),
                        },
                    ),
                };
                (
                    KernelSpec::PsdDerivedMetric {
                        base: base_spec,
                        s: *s,
                    },
                    Eval::PsdMetric {
                        base: base_eval,
                        s: *s,
                    },
                )
            }
        };
        Ok(ResolvedKernel { spec, eval })
    }
}

impl PsdKernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PsdKernelSpec::Gaussian { a } => check_bandwidth(a),
            PsdKernelSpec::EigenTable {
                lambdas,
                directions,
            } => {
                if lambdas.is_empty() || lambdas.len() != directions.len() {
                    return Err(Error::Config(
                        "eigen table needs one direction per eigenvalue".into(),
                    ));
                }
                if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
                    return Err(Error::Config("eigen table eigenvalues must be >= 0".into()));
                }
                let d = directions[0].len();
                if d == 0 || directions.iter().any(|v| v.len() != d) {
                    return Err(Error::Config("eigen table directions are ragged".into()));
                }
                Ok(())
            }
        }
    }

    /// Evaluates `K(x, y)`. Median bandwidths must be resolved first.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.validate()?;
        check_dims(x, y)?;
        match self {
            PsdKernelSpec::Gaussian {
                a: Bandwidth::Fixed(a),
            } => Ok(PsdEval::Gaussian {
                inv_two_a2: 1.0 / (2.0 * a * a),
            }
            .eval(x, y)),
            PsdKernelSpec::Gaussian { a: Bandwidth::Median } => Err(Error::Config(
                "median bandwidth must be resolved against a training sample".into(),
            )),
            PsdKernelSpec::EigenTable {
                lambdas,
                directions,
            } => {
                if directions[0].len() != x.len() {
                    return Err(Error::Input("eigen table dimension mismatch".into()));
                }
                Ok(PsdEval::Table {
                    lambdas: lambdas.clone(),
                    directions: directions.clone(),
                }
                .eval(x, y))
            }
        }
    }
}

fn check_bandwidth(a: &Bandwidth) -> Result<()> {
    match a {
        Bandwidth::Fixed(v) if !(*v > 0.0) || !v.is_finite() => {
            Err(Error::Config(format!("bandwidth {v} must be positive")))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PsdEval {
    Gaussian {
        inv_two_a2: f64,
    },
    Table {
        lambdas: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },
}

impl PsdEval {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            PsdEval::Gaussian { inv_two_a2 } => (-sq_dist(x, y) * inv_two_a2).exp(),
            PsdEval::Table {
                lambdas,
                directions,
            } => lambdas
                .iter()
                .zip(directions)
                .map(|(l, v)| l * dot(v, x) * dot(v, y))
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Eval {
    Energy { eta: f64, norm: Norm },
    Gaussian { inv_two_a2: f64 },
    Grothendieck,
    PsdMetric { base: PsdEval, s: f64 },
}

/// A validated kernel with every bandwidth fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedKernel {
    spec: KernelSpec,
    eval: Eval,
}

impl ResolvedKernel {
    /// The spec with bandwidths substituted (when a training sample was given).
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
}

impl Kernel for ResolvedKernel {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.eval {
            Eval::Energy { eta, norm } => match norm {
                Norm::L2 => {
                    let ss = sq_dist(x, y);
                    if *eta == 1.0 {
                        ss.sqrt()
                    } else {
                        ss.powf(eta / 2.0)
                    }
                }
                Norm::L1 => {
                    let s = l1_dist(x, y);
                    if *eta == 0.5 {
                        s.sqrt()
                    } else if *eta == 1.0 {
                        s
                    } else {
                        s.powf(*eta)
                    }
                }
            },
            Eval::Gaussian { inv_two_a2 } => (1.0 - (-sq_dist(x, y) * inv_two_a2).exp())
                .max(0.0)
                .sqrt(),
            Eval::Grothendieck => psi(x, y),
            Eval::PsdMetric { base, s } => {
                let delta = (base.eval(x, x) + base.eval(y, y) - 2.0 * base.eval(x, y)).max(0.0);
                if *s == 0.5 {
                    delta.sqrt()
                } else {
                    delta.powf(*s)
                }
            }
        }
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn l1_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn psi(x: &[f64], y: &[f64]) -> f64 {
    let num = 1.0 + dot(x, y);
    let den = ((1.0 + dot(x, x)) * (1.0 + dot(y, y))).sqrt();
    // Cauchy-Schwarz bounds the ratio by 1; rounding may not.
    (num / den).clamp(-1.0, 1.0).acos()
}

/// Evaluates `spec` at `(x, y)`, checking dimensions and parameters.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    if spec.needs_training() {
        return Err(Error::Config(
            "median bandwidth must be resolved against a training sample".into(),
        ));
    }
    if let KernelSpec::PsdDerivedMetric {
        base: PsdKernelSpec::EigenTable { directions, .. },
        ..
    } = spec
    {
        if directions.first().map(Vec::len) != Some(x.len()) {
            return Err(Error::Input("eigen table dimension mismatch".into()));
        }
    }
    Ok(spec.resolve(None)?.eval(x, y))
}

/// `arccos[(1 + <x,y>) / sqrt((1 + <x,x>)(1 + <y,y>))]`, in `[0, pi]`.
pub fn grothendieck_psi(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    Ok(psi(x, y))
}

/// Lower median of the Euclidean distances over unordered pairs `i < j`.
pub fn median_bandwidth(sample: &[Vec<f64>]) -> Result<f64> {
    sample_dim(sample)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::Input("median bandwidth needs at least 2 points".into()));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(&sample[i], &sample[j]).sqrt());
        }
    }
    let mid = (d.len() - 1) / 2;
    let (_, med, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let med = *med;
    if med <= 0.0 {
        return Err(Error::DegenerateBandwidth(n));
    }
    Ok(med)
}

/// Builds `[K(x,x) + K(y,y) - 2K(x,y)]^s` from a PSD base kernel.
pub fn derived_metric(base: PsdKernelSpec, s: f64) -> Result<KernelSpec> {
    let spec = KernelSpec::PsdDerivedMetric { base, s };
    spec.validate()?;
    Ok(spec)
}

/// Mean of `h^2` over unordered training pairs; a finiteness sanity check
/// for the second-moment requirement on the kernel.
pub fn mean_square_kernel<K: Kernel>(kernel: &K, sample: &[Vec<f64>]) -> Result<f64> {
    sample_dim(sample)?;
    let n = sample.len();
    if n < 2 {
        return Err(Error::Input("need at least 2 points".into()));
    }
    let mut acc = crate::numeric::NeumaierSum::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = kernel.eval(&sample[i], &sample[j]);
            acc.add(v * v);
        }
    }
    Ok(acc.value() / crate::numeric::pairs(n))
}
