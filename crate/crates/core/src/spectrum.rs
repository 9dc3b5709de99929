//! Eigenvalues of the doubly centered kernel matrix `A_m`, which estimate the
//! spectrum of the integral operator of the degenerate kernel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{sample_dim, Error, Result};
use crate::kernels::Kernel;
use crate::numeric::{csum, pairs};

/// Estimated eigenvalues, ordered by decreasing absolute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub m: usize,
    pub lambdas: Vec<f64>,
    /// Squared Frobenius norm of the source matrix; not serialized.
    #[serde(skip)]
    pub frobenius_sq: f64,
}

impl SpectrumEstimate {
    /// Builds an estimate from raw eigenvalues (any order).
    pub fn from_lambdas(m: usize, mut lambdas: Vec<f64>) -> Self {
        lambdas.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
        let frobenius_sq = csum(lambdas.iter().map(|l| l * l));
        Self {
            m,
            lambdas,
            frobenius_sq,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SpectrumEstimate = serde_json::from_str(s)?;
        if raw.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Input("non-finite eigenvalue in spectrum file".into()));
        }
        Ok(Self::from_lambdas(raw.m, raw.lambdas))
    }

    pub fn sum_sq(&self) -> f64 {
        csum(self.lambdas.iter().map(|l| l * l))
    }

    /// Keeps the leading `l` eigenvalues.
    pub fn top(&self, l: usize) -> Self {
        Self::from_lambdas(self.m, self.lambdas.iter().take(l).copied().collect())
    }

    /// Smallest leading set whose discarded squared mass is at most
    /// `tol * sum(lambda^2)`.
    pub fn truncate_by_energy(&self, tol: f64) -> Self {
        let total = self.sum_sq();
        if total == 0.0 {
            return self.top(1);
        }
        let mut tail = total;
        let mut keep = self.lambdas.len();
        for (i, l) in self.lambdas.iter().enumerate() {
            tail -= l * l;
            if tail <= tol * total {
                keep = i + 1;
                break;
            }
        }
        self.top(keep)
    }
}

/// `(A_m)_{ij} = m^{-1} (h(X_i,X_j) - h_{1,i} - h_{1,j} + hbar)` where
/// `h_{1,i}` is the mean of `h(X_i, X_l)` over `l != i` and `hbar` the mean
/// over unordered pairs. The diagonal uses `h(X_i, X_i)` literally.
pub fn build_centered_gram<K: Kernel>(kernel: &K, training: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    sample_dim(training)?;
    let m = training.len();
    if m < 3 {
        return Err(Error::Input(format!("centered Gram matrix needs m >= 3, got {m}")));
    }
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        h[(i, i)] = kernel.eval(&training[i], &training[i]);
        for j in (i + 1)..m {
            let v = kernel.eval(&training[i], &training[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let row_mean: Vec<f64> = (0..m)
        .map(|i| csum((0..m).filter(|&l| l != i).map(|l| h[(i, l)])) / (m - 1) as f64)
        .collect();
    let grand = csum((0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).map(|(i, j)| h[(i, j)]))
        / pairs(m);
    let inv_m = 1.0 / m as f64;
    let mut a = h;
    for j in 0..m {
        for i in 0..m {
            a[(i, j)] = inv_m * (a[(i, j)] - row_mean[i] - row_mean[j] + grand);
        }
    }
    Ok(a)
}

/// All eigenvalues of a symmetric matrix, sorted by `|lambda|` descending.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<SpectrumEstimate> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::Contract("matrix is not square".into()));
    }
    let scale = matrix.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Contract(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    if n == 0 {
        return Ok(SpectrumEstimate::from_lambdas(0, Vec::new()));
    }
    let lambdas: Vec<f64> = matrix.clone().symmetric_eigenvalues().iter().copied().collect();
    let mut est = SpectrumEstimate::from_lambdas(n, lambdas);
    est.frobenius_sq = csum(matrix.iter().map(|v| v * v));
    Ok(est)
}

/// Gram construction followed by the eigensolve.
pub fn estimate_spectrum<K: Kernel>(kernel: &K, training: &[Vec<f64>]) -> Result<SpectrumEstimate> {
    eigenvalues(&build_centered_gram(kernel, training)?)
}
