use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{DataError, DatasetSchema};

/// One labeled flow: raw feature strings keyed by canonical schema column name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub raw: BTreeMap<String, String>,
    pub label: String,
}

impl FlowRecord {
    pub fn get(&self, column: &str) -> Option<&str> {
        self.raw.get(column).map(String::as_str)
    }
}

/// A problem with one data row; `row` counts data rows from 1 (the header is row 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    pub row: usize,
    pub message: String,
}

impl std::fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<FlowRecord>,
    /// Rows rejected during ingestion.
    pub diagnostics: Vec<RowDiagnostic>,
}

pub fn ingest_csv(path: &Path, schema: &DatasetSchema) -> Result<Ingested, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file, schema).map_err(|e| e.in_file(path))
}

/// Ingests several files concurrently; records are concatenated in argument order.
pub fn ingest_many(paths: &[PathBuf], schema: &DatasetSchema) -> Result<Ingested, DataError> {
    let parts: Vec<Ingested> = paths
        .par_iter()
        .map(|p| ingest_csv(p, schema))
        .collect::<Result<_, _>>()?;
    let mut out = Ingested::default();
    for part in parts {
        out.records.extend(part.records);
        out.diagnostics.extend(part.diagnostics);
    }
    Ok(out)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Ingested, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let find = |pred: &dyn Fn(&str) -> bool| headers.iter().position(pred);

    let mut columns = Vec::with_capacity(schema.num_features());
    for col in &schema.feature_columns {
        let idx = find(&|h| col.matches(h)).ok_or_else(|| DataError::MissingColumn {
            column: col.name.clone(),
            file: None,
        })?;
        columns.push((col.name.clone(), idx));
    }
    let label_idx = find(&|h| h.trim().eq_ignore_ascii_case(&schema.label_column)).ok_or_else(|| {
        DataError::MissingColumn {
            column: schema.label_column.clone(),
            file: None,
        }
    })?;

    let mut out = Ingested::default();
    for (k, row) in csv.records().enumerate() {
        let row_no = k + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.diagnostics.push(RowDiagnostic {
                    row: row_no,
                    message: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let label = row.get(label_idx).map(str::trim).unwrap_or("");
        if label.is_empty() {
            out.diagnostics.push(RowDiagnostic {
                row: row_no,
                message: format!("missing label in column {}", schema.label_column),
            });
            continue;
        }
        let raw = columns
            .iter()
            .map(|(name, idx)| (name.clone(), row.get(*idx).unwrap_or("").trim().to_string()))
            .collect();
        out.records.push(FlowRecord {
            raw,
            label: label.to_string(),
        });
    }
    Ok(out)
}
