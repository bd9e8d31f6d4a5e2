//! Model files.
//!
//! A container with magic `LBDM` (see [`crate::container`]) whose JSON header holds the
//! config, schema, feature columns, class names, normalization statistics,
//! architecture and training history. The payload is every parameter as little-endian
//! `f64`, row-major, tensor by tensor in this order:
//!
//! 1. for each forward layer, bottom to top: `W_i W_f W_g W_o U_i U_f U_g U_o b_i b_f b_g b_o`
//! 2. the same for each reverse-direction layer, if bidirectional
//! 3. dense weights (`classes x representation`), then dense bias

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::container::{self, ContainerError};
use crate::data::{ColumnStats, SchemaKind};
use crate::nn::{Architecture, LstmParams, NnError};
use crate::train::{architecture_for, EpochHistory, TrainedModel};

pub const MODEL_MAGIC: [u8; 4] = *b"LBDM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct ArchHeader {
    input: usize,
    layer_cells: Vec<usize>,
    bidirectional: bool,
    classes: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    schema: SchemaKind,
    feature_columns: Vec<String>,
    class_names: Vec<String>,
    stats: ColumnStats,
    architecture: ArchHeader,
    parameter_count: usize,
    history: EpochHistory,
}

pub fn model_to_bytes(model: &TrainedModel) -> Result<Vec<u8>, ModelIoError> {
    let a = model.params.architecture();
    let header = Header {
        format_version: MODEL_VERSION,
        config: model.config.clone(),
        schema: model.schema,
        feature_columns: model.feature_columns.clone(),
        class_names: model.class_names.clone(),
        stats: model.stats.clone(),
        architecture: ArchHeader {
            input: a.input,
            layer_cells: a.layer_cells,
            bidirectional: a.bidirectional,
            classes: a.classes,
        },
        parameter_count: model.params.parameter_count(),
        history: model.history.clone(),
    };
    let header = serde_json::to_string(&header).map_err(ContainerError::from)?;
    let payload = container::f64s_to_bytes(model.params.tensors().into_iter().flatten().copied());
    Ok(container::encode(MODEL_MAGIC, MODEL_VERSION, &header, &payload))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel, ModelIoError> {
    let (header, payload) = container::decode(bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let h: Header = serde_json::from_str(&header).map_err(ContainerError::from)?;
    let arch = Architecture {
        input: h.architecture.input,
        layer_cells: h.architecture.layer_cells,
        bidirectional: h.architecture.bidirectional,
        classes: h.architecture.classes,
    };
    if architecture_for(&h.config, arch.input, arch.classes) != arch {
        return Err(ModelIoError::Inconsistent("architecture disagrees with config".into()));
    }
    if h.class_names.len() != arch.classes
        || h.stats.columns() != arch.input
        || h.feature_columns.len() != arch.input
    {
        return Err(ModelIoError::Inconsistent(
            "class names, statistics and input width disagree".into(),
        ));
    }
    let mut params = LstmParams::<f64>::zeros(&arch)?;
    if params.parameter_count() != h.parameter_count || payload.len() != h.parameter_count * 8 {
        return Err(ModelIoError::Inconsistent(format!(
            "payload holds {} bytes, architecture needs {} parameters",
            payload.len(),
            params.parameter_count()
        )));
    }
    let values = container::bytes_to_f64s(payload)?;
    let mut at = 0;
    for t in params.tensors_mut() {
        t.copy_from_slice(&values[at..at + t.len()]);
        at += t.len();
    }
    Ok(TrainedModel {
        params,
        config: h.config,
        stats: h.stats,
        class_names: h.class_names,
        schema: h.schema,
        feature_columns: h.feature_columns,
        history: h.history,
    })
}

/// Writes atomically: on failure no partial file is left at `path`.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelIoError> {
    let bytes = model_to_bytes(model)?;
    container::write_atomic(path, &bytes).map_err(|source| ModelIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelIoError> {
    model_from_bytes(&container::read_file(path)?)
}
