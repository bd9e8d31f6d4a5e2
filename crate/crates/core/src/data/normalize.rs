//! Per-column z-score scaling, `z = (x - μ) / σ`, with the population standard
//! deviation (divisor N). A zero-variance column scales to all zeros.

use serde::{Deserialize, Serialize};

use super::{DataError, FeatureMatrix};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// Rows the statistics were fit on.
    pub n: usize,
}

impl ColumnStats {
    pub fn columns(&self) -> usize {
        self.mean.len()
    }
}

/// Fits column means and population standard deviations (Welford's update).
pub fn zscore_fit(x: &FeatureMatrix) -> ColumnStats {
    let m = x.cols();
    let mut mean = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    for i in 0..x.rows() {
        let count = (i + 1) as f64;
        for (j, &v) in x.row(i).iter().enumerate() {
            let delta = v - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (v - mean[j]);
        }
    }
    let n = x.rows();
    let std_dev = m2.iter().map(|s| (s / n as f64).max(0.0).sqrt()).collect();
    ColumnStats { mean, std_dev, n }
}

pub fn zscore_transform(x: &FeatureMatrix, stats: &ColumnStats) -> Result<FeatureMatrix, DataError> {
    if x.cols() != stats.columns() {
        return Err(DataError::ColumnCount {
            expected: stats.columns(),
            actual: x.cols(),
        });
    }
    let values = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let sigma = stats.std_dev[j];
        if sigma > 0.0 {
            (x.values.get(i, j) - stats.mean[j]) / sigma
        } else {
            0.0
        }
    });
    FeatureMatrix::new(x.columns.clone(), values)
}

/// `x = z·σ + μ`. Zero-variance columns come back as their mean.
pub fn zscore_inverse(z: &FeatureMatrix, stats: &ColumnStats) -> Result<FeatureMatrix, DataError> {
    if z.cols() != stats.columns() {
        return Err(DataError::ColumnCount {
            expected: stats.columns(),
            actual: z.cols(),
        });
    }
    let values = Matrix::from_fn(z.rows(), z.cols(), |i, j| {
        z.values.get(i, j) * stats.std_dev[j] + stats.mean[j]
    });
    FeatureMatrix::new(z.columns.clone(), values)
}
