use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, FeatureMatrix};

/// Row indices of a stratified split, each list ascending so row order survives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    /// Source row of each partition row.
    pub indices: Vec<usize>,
}

/// Seeded per-class split. Each class sends `ceil(fraction * n_c)` rows to train;
/// a class with fewer than two rows goes wholly to train with a warning.
pub fn stratified_indices(labels: &[usize], train_fraction: f64, seed: u64) -> Result<SplitIndices, DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        warnings: Vec::new(),
    };
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            out.warnings.push(format!(
                "class {class} has {} sample(s); assigned wholly to the training partition",
                members.len()
            ));
            out.train.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n_train = (train_fraction * members.len() as f64).ceil() as usize;
        let (tr, va) = members.split_at(n_train.min(members.len()));
        out.train.extend_from_slice(tr);
        out.validation.extend_from_slice(va);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    Ok(out)
}

/// Splits a labeled matrix into training and validation partitions.
pub fn split(
    x: &FeatureMatrix,
    labels: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<(Partition, Partition, Vec<String>), DataError> {
    if labels.len() != x.rows() {
        return Err(DataError::LabelCount {
            rows: x.rows(),
            labels: labels.len(),
        });
    }
    let idx = stratified_indices(labels, train_fraction, seed)?;
    if idx.validation.is_empty() {
        return Err(DataError::EmptyResult("validation partition is empty".into()));
    }
    let take = |indices: Vec<usize>| -> Result<Partition, DataError> {
        Ok(Partition {
            features: x.select_rows(&indices)?,
            labels: indices.iter().map(|&i| labels[i]).collect(),
            indices,
        })
    };
    Ok((take(idx.train)?, take(idx.validation)?, idx.warnings))
}
