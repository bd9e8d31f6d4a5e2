use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColumnStats, DataError, SchemaKind, WindowedDataset};
use crate::container::{self, ContainerError};

pub const DATASET_MAGIC: [u8; 4] = *b"LBDD";
pub const DATASET_VERSION: u32 = 1;

/// A preprocessed, windowed dataset together with the normalization it went through.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub schema: SchemaKind,
    pub feature_columns: Vec<String>,
    pub stats: ColumnStats,
    pub data: WindowedDataset,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    schema: SchemaKind,
    feature_columns: Vec<String>,
    class_names: Vec<String>,
    timesteps: usize,
    features: usize,
    samples: usize,
    stats: ColumnStats,
}

impl DatasetFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>, DataError> {
        let header = Header {
            format_version: DATASET_VERSION,
            schema: self.schema,
            feature_columns: self.feature_columns.clone(),
            class_names: self.data.class_names.clone(),
            timesteps: self.data.timesteps,
            features: self.data.features,
            samples: self.data.len(),
            stats: self.stats.clone(),
        };
        let header = serde_json::to_string(&header).map_err(ContainerError::from)?;
        let mut payload = container::f64s_to_bytes(self.data.tensor.iter().copied());
        for &l in &self.data.labels {
            payload.extend_from_slice(&(l as u32).to_le_bytes());
        }
        Ok(container::encode(DATASET_MAGIC, DATASET_VERSION, &header, &payload))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let (header, payload) = container::decode(bytes, DATASET_MAGIC, DATASET_VERSION)?;
        let h: Header = serde_json::from_str(&header).map_err(ContainerError::from)?;
        let n_values = h.samples * h.timesteps * h.features;
        let expected = n_values * 8 + h.samples * 4;
        if payload.len() != expected {
            return Err(DataError::Format(format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let (values, labels) = payload.split_at(n_values * 8);
        let tensor = container::bytes_to_f64s(values)?;
        let labels = labels
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let data = WindowedDataset::new(tensor, labels, h.timesteps, h.features, h.class_names)?;
        if h.stats.columns() != h.features || h.feature_columns.len() != h.features {
            return Err(DataError::Format("header feature counts disagree".into()));
        }
        Ok(Self {
            schema: h.schema,
            feature_columns: h.feature_columns,
            stats: h.stats,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        container::write_atomic(path, &self.to_bytes()?).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_bytes(&container::read_file(path)?).map_err(|e| e.in_file(path))
    }
}
