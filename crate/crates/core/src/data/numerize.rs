use std::collections::HashSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetSchema, FeatureKind, FlowRecord, RowDiagnostic};
use crate::linalg::Matrix;

/// Dense `N x M` feature matrix with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub values: Matrix<f64>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, values: Matrix<f64>) -> Result<Self, DataError> {
        if columns.len() != values.cols() {
            return Err(DataError::ColumnCount {
                expected: columns.len(),
                actual: values.cols(),
            });
        }
        Ok(Self { columns, values })
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let values = Matrix::from_rows(rows).map_err(|e| DataError::Config(e.to_string()))?;
        Self::new(columns, values)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.values.get(i, j)).collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, DataError> {
        if indices.is_empty() {
            return Err(DataError::EmptyResult("row selection is empty".into()));
        }
        let values = Matrix::from_fn(indices.len(), self.cols(), |r, c| self.values.get(indices[r], c));
        Ok(Self {
            columns: self.columns.clone(),
            values,
        })
    }
}

/// Bookkeeping from [`numerize`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumerizeReport {
    pub input_rows: usize,
    /// Empty or null-marker feature values.
    pub dropped_null: usize,
    /// Values that failed to parse (including IPv6 addresses).
    pub dropped_unparseable: usize,
    pub dropped_unknown_label: usize,
    pub dropped_duplicate: usize,
    #[serde(skip)]
    pub diagnostics: Vec<RowDiagnostic>,
}

impl NumerizeReport {
    pub fn dropped(&self) -> usize {
        self.dropped_null + self.dropped_unparseable + self.dropped_unknown_label + self.dropped_duplicate
    }
}

#[derive(Debug, Clone)]
pub struct Numerized {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub report: NumerizeReport,
}

enum Cell {
    Null,
    Bad(String),
}

fn is_null(s: &str) -> bool {
    s.is_empty() || ["-", "null", "nan", "na", "none", "?"].iter().any(|m| s.eq_ignore_ascii_case(m))
}

pub fn parse_ipv4(s: &str) -> Option<f64> {
    s.parse::<Ipv4Addr>().ok().map(|ip| f64::from(u32::from(ip)))
}

fn parse_number(s: &str) -> Option<f64> {
    // some published captures write ports in hex
    let v = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()? as f64
    } else {
        s.parse::<f64>().ok()?
    };
    v.is_finite().then_some(v)
}

fn parse_cell(raw: &str, kind: FeatureKind) -> Result<f64, Cell> {
    let s = raw.trim();
    if is_null(s) {
        return Err(Cell::Null);
    }
    let parsed = match kind {
        FeatureKind::Numeric => parse_number(s),
        FeatureKind::Ipv4 => parse_ipv4(s),
    };
    parsed.ok_or_else(|| Cell::Bad(s.to_string()))
}

/// Converts raw records into a numeric matrix plus encoded labels, dropping
/// null, unparseable, unknown-label and exact-duplicate rows.
pub fn numerize(records: &[FlowRecord], schema: &DatasetSchema) -> Result<Numerized, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyResult("no records to numerize".into()));
    }
    let mut report = NumerizeReport {
        input_rows: records.len(),
        ..Default::default()
    };
    let mut seen: HashSet<(Vec<u64>, usize)> = HashSet::with_capacity(records.len());
    let mut data = Vec::with_capacity(records.len() * schema.num_features());
    let mut labels = Vec::with_capacity(records.len());

    'rows: for (k, rec) in records.iter().enumerate() {
        let row_no = k + 1;
        let Some(label) = schema.encode_label(&rec.label) else {
            report.dropped_unknown_label += 1;
            report.diagnostics.push(RowDiagnostic {
                row: row_no,
                message: format!("unknown class {:?}", rec.label),
            });
            continue;
        };
        let mut row = Vec::with_capacity(schema.num_features());
        for col in &schema.feature_columns {
            match parse_cell(rec.get(&col.name).unwrap_or(""), col.kind) {
                Ok(v) => row.push(v),
                Err(Cell::Null) => {
                    report.dropped_null += 1;
                    report.diagnostics.push(RowDiagnostic {
                        row: row_no,
                        message: format!("null value in {}", col.name),
                    });
                    continue 'rows;
                }
                Err(Cell::Bad(s)) => {
                    report.dropped_unparseable += 1;
                    report.diagnostics.push(RowDiagnostic {
                        row: row_no,
                        message: format!("cannot parse {s:?} in {}", col.name),
                    });
                    continue 'rows;
                }
            }
        }
        let key = (row.iter().map(|v| v.to_bits()).collect(), label);
        if !seen.insert(key) {
            report.dropped_duplicate += 1;
            continue;
        }
        data.extend(row);
        labels.push(label);
    }

    if labels.is_empty() {
        return Err(DataError::EmptyResult(format!(
            "all {} rows were dropped ({} null, {} unparseable, {} unknown label, {} duplicate)",
            report.input_rows,
            report.dropped_null,
            report.dropped_unparseable,
            report.dropped_unknown_label,
            report.dropped_duplicate
        )));
    }
    let values = Matrix::new(labels.len(), schema.num_features(), data).expect("row width fixed by schema");
    let columns = schema.feature_names().into_iter().map(String::from).collect();
    Ok(Numerized {
        features: FeatureMatrix { columns, values },
        labels,
        report,
    })
}
