use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    numerize, split, window, zscore_fit, zscore_transform, DataError, DatasetFile, DatasetSchema, Ingested,
    NumerizeReport,
};

/// What preprocessing kept and dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub schema: String,
    pub records_ingested: usize,
    pub rows_rejected_at_ingest: usize,
    pub numerize: NumerizeReport,
    pub rows_kept: usize,
    /// Rows per class after cleaning, before the split.
    pub class_counts: BTreeMap<String, usize>,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub timesteps: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: DatasetFile,
    pub validation: DatasetFile,
    pub summary: PreprocessSummary,
}

/// numerize, stratified split, z-score fit on the training rows only, transform
/// both partitions, window each.
pub fn prepare(
    ingested: &Ingested,
    schema: &DatasetSchema,
    train_fraction: f64,
    timesteps: usize,
    seed: u64,
) -> Result<Prepared, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let num = numerize(&ingested.records, schema)?;
    let (tr, va, warnings) = split(&num.features, &num.labels, train_fraction, seed)?;
    let stats = zscore_fit(&tr.features);
    let file = |features, labels: &[usize]| -> Result<DatasetFile, DataError> {
        let z = zscore_transform(features, &stats)?;
        Ok(DatasetFile {
            schema: schema.name,
            feature_columns: num.features.columns.clone(),
            stats: stats.clone(),
            data: window(&z, labels, timesteps, &schema.class_names)?,
        })
    };
    let train = file(&tr.features, &tr.labels)?;
    let validation = file(&va.features, &va.labels)?;
    let mut class_counts = BTreeMap::new();
    for &l in &num.labels {
        *class_counts.entry(schema.class_names[l].clone()).or_insert(0) += 1;
    }
    let summary = PreprocessSummary {
        schema: schema.name.as_str().to_string(),
        records_ingested: ingested.records.len(),
        rows_rejected_at_ingest: ingested.diagnostics.len(),
        rows_kept: num.labels.len(),
        numerize: num.report,
        class_counts,
        train_rows: tr.labels.len(),
        validation_rows: va.labels.len(),
        train_windows: train.data.len(),
        validation_windows: validation.data.len(),
        timesteps,
        train_fraction,
        seed,
        warnings,
    };
    Ok(Prepared {
        train,
        validation,
        summary,
    })
}
