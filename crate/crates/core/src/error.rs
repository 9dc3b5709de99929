use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A parameter lies outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Operation not permitted in the current lifecycle state.
    #[error("state error: {0}")]
    State(String),

    /// Median bandwidth is zero because every training point coincides.
    #[error("degenerate bandwidth: all {0} sample points coincide")]
    DegenerateBandwidth(usize),

    /// The alternative has no signal under the chosen kernel.
    #[error("undetectable change: {0}")]
    Undetectable(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Input("zero-dimensional observation".into()));
    }
    Ok(())
}

/// Checks that every row of `sample` has the same positive dimension and returns it.
pub(crate) fn sample_dim(sample: &[Vec<f64>]) -> Result<usize> {
    let first = sample
        .first()
        .ok_or_else(|| Error::Input("empty sample".into()))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::Input("zero-dimensional observation".into()));
    }
    for (i, row) in sample.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Input(format!(
                "row {i} has dimension {}, expected {d}",
                row.len()
            )));
        }
    }
    Ok(d)
}
