//! Model-ready features: min-max scaling, one-hot device columns and
//! Gaussian noise.

use std::collections::BTreeSet;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::RadiationReading;
use crate::matrix::{Column, ColumnKind, FeatureMatrix};
use crate::rng;

/// Continuous columns retained from each reading, in matrix order.
pub const CONTINUOUS_COLUMNS: [&str; 5] =
    ["captured_unix", "latitude", "longitude", "value_usv_h", "uploaded_unix"];

/// Index of the radiation value among [`CONTINUOUS_COLUMNS`].
pub const VALUE_COLUMN: usize = 3;

pub fn continuous_features(readings: &[RadiationReading]) -> FeatureMatrix {
    let mut values = Vec::with_capacity(readings.len() * CONTINUOUS_COLUMNS.len());
    for r in readings {
        values.extend([r.captured_unix, r.latitude, r.longitude, r.value_usv_h, r.uploaded_unix]);
    }
    let columns = CONTINUOUS_COLUMNS.iter().map(|&n| Column::continuous(n)).collect();
    // Readings are validated finite at ingest.
    FeatureMatrix::new(values, readings.len(), columns).expect("finite readings")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_minmax(matrix: &FeatureMatrix) -> Result<ScalerParams> {
    if matrix.n_rows() == 0 {
        return Err(Error::Empty("cannot fit a scaler on zero rows"));
    }
    let n = matrix.n_cols();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for row in matrix.rows() {
        for j in 0..n {
            min[j] = min[j].min(row[j]);
            max[j] = max[j].max(row[j]);
        }
    }
    Ok(ScalerParams { min, max })
}

/// Maps each entry to `(x - min) / (max - min)` clipped to [0, 1];
/// constant columns map to 0.
pub fn apply_minmax(matrix: &FeatureMatrix, params: &ScalerParams) -> Result<FeatureMatrix> {
    check_width(matrix, params)?;
    let mut out = matrix.clone();
    let n = matrix.n_cols();
    for (k, v) in out.values_mut().iter_mut().enumerate() {
        let j = k % n;
        let span = params.max[j] - params.min[j];
        *v = if span > 0.0 { ((*v - params.min[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
    }
    Ok(out)
}

pub fn inverse_minmax(matrix: &FeatureMatrix, params: &ScalerParams) -> Result<FeatureMatrix> {
    check_width(matrix, params)?;
    let mut out = matrix.clone();
    let n = matrix.n_cols();
    for (k, v) in out.values_mut().iter_mut().enumerate() {
        let j = k % n;
        *v = params.min[j] + *v * (params.max[j] - params.min[j]);
    }
    Ok(out)
}

fn check_width(matrix: &FeatureMatrix, params: &ScalerParams) -> Result<()> {
    if params.min.len() != matrix.n_cols() || params.max.len() != matrix.n_cols() {
        return Err(Error::shape(format!(
            "scaler fitted on {} columns, matrix has {}",
            params.min.len(),
            matrix.n_cols()
        )));
    }
    Ok(())
}

/// Distinct device ids in lexicographic order; position = one-hot column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderMap {
    pub devices: Vec<String>,
}

impl EncoderMap {
    pub fn fit<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = ids.into_iter().collect();
        EncoderMap { devices: set.into_iter().map(String::from).collect() }
    }

    pub fn from_readings(readings: &[RadiationReading]) -> Self {
        Self::fit(readings.iter().map(|r| r.device_id.as_str()))
    }

    pub fn index_of(&self, device: &str) -> Option<usize> {
        self.devices.binary_search_by(|d| d.as_str().cmp(device)).ok()
    }
}

/// One column per known device; unknown devices get an all-zero block.
pub fn one_hot_encode(readings: &[RadiationReading], encoder: &EncoderMap) -> FeatureMatrix {
    let width = encoder.devices.len();
    let mut values = vec![0.0; readings.len() * width];
    for (i, r) in readings.iter().enumerate() {
        if let Some(j) = encoder.index_of(&r.device_id) {
            values[i * width + j] = 1.0;
        }
    }
    let columns = encoder.devices.iter().map(|d| Column::one_hot(d)).collect();
    FeatureMatrix::new(values, readings.len(), columns).expect("0/1 entries")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Noise standard deviation as a fraction of each column's std.
    pub eta: f64,
    pub seed: u64,
    /// Only perturb synthetic rows instead of the whole dataset.
    pub synthetic_only: bool,
    /// Re-clip perturbed values into the scaled [0, 1] domain.
    pub clip_unit: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { eta: 0.01, seed: 0, synthetic_only: false, clip_unit: true }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::param(format!("noise eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Adds N(0, (eta * std_col)^2) to every continuous column; one-hot columns
/// are left untouched.
pub fn inject_noise(matrix: &FeatureMatrix, config: &NoiseConfig) -> Result<FeatureMatrix> {
    inject_noise_rows(matrix, config, None)
}

/// As [`inject_noise`], restricted to rows where `mask` is true.
pub fn inject_noise_rows(
    matrix: &FeatureMatrix,
    config: &NoiseConfig,
    mask: Option<&[bool]>,
) -> Result<FeatureMatrix> {
    config.validate()?;
    if let Some(m) = mask {
        if m.len() != matrix.n_rows() {
            return Err(Error::shape("noise mask length differs from row count"));
        }
    }
    let mut out = matrix.clone();
    if config.eta == 0.0 || matrix.n_rows() == 0 {
        return Ok(out);
    }
    let cols = matrix.columns_of_kind(ColumnKind::Continuous);
    let sigmas: Vec<f64> = cols.iter().map(|&j| config.eta * column_std(matrix, j)).collect();
    let normals: Vec<Option<Normal<f64>>> = sigmas
        .iter()
        .map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("finite sigma")))
        .collect();

    let mut rng = rng::seeded(config.seed);
    let n = matrix.n_cols();
    let values = out.values_mut();
    for i in 0..matrix.n_rows() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for (c, &j) in cols.iter().enumerate() {
            if let Some(dist) = &normals[c] {
                let v = &mut values[i * n + j];
                *v += dist.sample(&mut rng);
                if config.clip_unit {
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Population standard deviation of one column.
pub fn column_std(matrix: &FeatureMatrix, j: usize) -> f64 {
    let n = matrix.n_rows() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = matrix.rows().map(|r| r[j]).sum::<f64>() / n;
    (matrix.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
}
