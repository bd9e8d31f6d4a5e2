use super::{DataError, FeatureMatrix};

/// Model-ready windows: a `samples x timesteps x features` row-major tensor with
/// one label per window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub tensor: Vec<f64>,
    pub labels: Vec<usize>,
    pub timesteps: usize,
    pub features: usize,
    pub class_names: Vec<String>,
}

impl WindowedDataset {
    pub fn new(
        tensor: Vec<f64>,
        labels: Vec<usize>,
        timesteps: usize,
        features: usize,
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let ds = Self {
            tensor,
            labels,
            timesteps,
            features,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.timesteps == 0 || self.features == 0 {
            return Err(DataError::Config("windows need at least one timestep and feature".into()));
        }
        if self.tensor.len() != self.labels.len() * self.timesteps * self.features {
            return Err(DataError::Format(format!(
                "tensor has {} values, expected {} windows x {} steps x {} features",
                self.tensor.len(),
                self.labels.len(),
                self.timesteps,
                self.features
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(DataError::Format(format!(
                "label {bad} out of range for {} classes",
                self.class_names.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Window `i` as a flat `timesteps x features` slice.
    pub fn window(&self, i: usize) -> &[f64] {
        let stride = self.timesteps * self.features;
        &self.tensor[i * stride..(i + 1) * stride]
    }

    /// Per-class window counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Stride-1 sliding windows over row order. Window `i` covers rows `[i, i + T)` and
/// takes the label of its newest row, `i + T - 1`; there are `N - T + 1` windows.
pub fn window(
    x: &FeatureMatrix,
    labels: &[usize],
    timesteps: usize,
    class_names: &[String],
) -> Result<WindowedDataset, DataError> {
    let n = x.rows();
    if labels.len() != n {
        return Err(DataError::LabelCount {
            rows: n,
            labels: labels.len(),
        });
    }
    if timesteps == 0 {
        return Err(DataError::Config("timesteps must be at least 1".into()));
    }
    if n < timesteps {
        return Err(DataError::TooFewRows { rows: n, timesteps });
    }
    let count = n - timesteps + 1;
    let m = x.cols();
    let rows = x.values.as_slice();
    let mut tensor = Vec::with_capacity(count * timesteps * m);
    for i in 0..count {
        tensor.extend_from_slice(&rows[i * m..(i + timesteps) * m]);
    }
    let window_labels = (0..count).map(|i| labels[i + timesteps - 1]).collect();
    WindowedDataset::new(tensor, window_labels, timesteps, m, class_names.to_vec())
}
