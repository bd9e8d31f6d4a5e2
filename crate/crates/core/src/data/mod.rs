//! Flow CSV ingestion and preprocessing: schema selection, numerization,
//! z-score scaling, stratified splitting and sliding-window shaping.

mod dataset_file;
mod ingest;
mod normalize;
mod numerize;
mod pipeline;
mod schema;
mod split;
mod window;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::container::ContainerError;

pub use dataset_file::{DatasetFile, DATASET_MAGIC, DATASET_VERSION};
pub use ingest::{ingest_csv, ingest_many, ingest_reader, FlowRecord, Ingested, RowDiagnostic};
pub use normalize::{zscore_fit, zscore_inverse, zscore_transform, ColumnStats};
pub use numerize::{numerize, parse_ipv4, FeatureMatrix, NumerizeReport, Numerized};
pub use pipeline::{prepare, PreprocessSummary, Prepared};
pub use schema::{DatasetSchema, FeatureColumn, FeatureKind, SchemaKind};
pub use split::{split, stratified_indices, Partition, SplitIndices};
pub use window::{window, WindowedDataset};

/// Default look-back length of a window.
pub const DEFAULT_TIMESTEPS: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("missing column `{column}`{}", file.as_ref().map(|f| format!(" in {}", f.display())).unwrap_or_default())]
    MissingColumn { column: String, file: Option<PathBuf> },
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error("no usable rows: {0}")]
    EmptyResult(String),
    #[error("expected {expected} columns, got {actual}")]
    ColumnCount { expected: usize, actual: usize },
    #[error("{labels} labels for {rows} rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("{rows} rows cannot fill a window of {timesteps} timesteps")]
    TooFewRows { rows: usize, timesteps: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DataError>,
    },
}

impl DataError {
    /// Attaches file context where the error does not already carry it.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            DataError::MissingColumn { column, file: None } => DataError::MissingColumn {
                column,
                file: Some(path.to_path_buf()),
            },
            e @ (DataError::Io { .. } | DataError::MissingColumn { .. } | DataError::InFile { .. }) => e,
            other => DataError::InFile {
                path: path.to_path_buf(),
                source: Box::new(other),
            },
        }
    }
}
