//! Minibatch Adam training with per-epoch history, early stopping and prediction.
//!
//! Each batch is cut into fixed chunks of [`CHUNK`] windows. Chunks run in parallel
//! and their gradients are summed in chunk order, so results do not depend on the
//! number of worker threads.

use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ModelConfig, Variant};
use crate::data::{
    window, zscore_transform, ColumnStats, DatasetFile, DatasetSchema, FeatureMatrix, SchemaKind, WindowedDataset,
};
use crate::linalg::Matrix;
use crate::loss::{adam_step, argmax, clip_global_norm, softmax_rows, sparse_cce, LossError, OptimizerState};
use crate::metrics::{self, MetricsError};
use crate::nn::{backward_sequence, forward_sequence, init_params, Architecture, LstmParams, NnError, SequenceBatch};

/// Windows per parallel work unit.
pub const CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training data: {0}")]
    Data(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("schema mismatch: model expects {expected}, data is {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("normalization statistics differ from the model's: {0}")]
    StatsMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: Option<usize>,
}

impl EpochHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.get(e - 1))
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc`, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            );
        }
        out
    }
}

/// A deployable classifier: weights plus everything needed to prepare its input.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: LstmParams<f64>,
    pub config: ModelConfig,
    pub stats: ColumnStats,
    pub class_names: Vec<String>,
    pub schema: SchemaKind,
    pub feature_columns: Vec<String>,
    pub history: EpochHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    /// One row of class probabilities per window.
    pub probabilities: Vec<Vec<f64>>,
}

/// Loss and predictions of a forward-only pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

pub fn architecture_for(config: &ModelConfig, features: usize, classes: usize) -> Architecture {
    Architecture {
        input: features,
        layer_cells: config.layer_cells.clone(),
        bidirectional: config.variant == Variant::Bidirectional,
        classes,
    }
}

fn chunk_ranges(len: usize) -> Vec<std::ops::Range<usize>> {
    (0..len).step_by(CHUNK).map(|s| s..(s + CHUNK).min(len)).collect()
}

struct ChunkResult {
    loss_sum: f64,
    grads: LstmParams<f64>,
    predictions: Vec<usize>,
}

/// Mean loss and gradient over `indices`, accumulated chunk by chunk in order.
fn batch_gradient(
    params: &LstmParams<f64>,
    ds: &WindowedDataset,
    indices: &[usize],
) -> Result<(f64, LstmParams<f64>, Vec<usize>), TrainError> {
    let n = indices.len() as f64;
    let results: Vec<Result<ChunkResult, TrainError>> = chunk_ranges(indices.len())
        .into_par_iter()
        .map(|r| {
            let idx = &indices[r];
            let batch = SequenceBatch::<f64>::gather(&ds.tensor, ds.timesteps, ds.features, idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
            let (logits, trace) = forward_sequence(params, &batch)?;
            let (loss, dlogits) = sparse_cce(&logits, &labels)?;
            let m = idx.len() as f64;
            let grads = backward_sequence(params, &trace, &dlogits.scale(m / n))?;
            let predictions = (0..logits.rows()).map(|b| argmax(logits.row(b))).collect();
            Ok(ChunkResult {
                loss_sum: loss * m,
                grads,
                predictions,
            })
        })
        .collect();
    let mut total = params.zeros_like();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(indices.len());
    for r in results {
        let r = r?;
        total.add_assign(&r.grads);
        loss_sum += r.loss_sum;
        predictions.extend(r.predictions);
    }
    Ok((loss_sum / n, total, predictions))
}

fn forward_logits(params: &LstmParams<f64>, ds: &WindowedDataset) -> Result<Vec<Matrix<f64>>, TrainError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    chunk_ranges(all.len())
        .into_par_iter()
        .map(|r| {
            let batch = SequenceBatch::<f64>::gather(&ds.tensor, ds.timesteps, ds.features, &all[r])?;
            Ok(forward_sequence(params, &batch)?.0)
        })
        .collect()
}

/// Mean cross-entropy and accuracy of `params` over every window of `ds`.
pub fn evaluate(params: &LstmParams<f64>, ds: &WindowedDataset) -> Result<Evaluation, TrainError> {
    check_shape(params, ds)?;
    let logits = forward_logits(params, ds)?;
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(ds.len());
    for (chunk, r) in logits.iter().zip(chunk_ranges(ds.len())) {
        let (loss, _) = sparse_cce(chunk, &ds.labels[r.clone()])?;
        loss_sum += loss * r.len() as f64;
        predictions.extend((0..chunk.rows()).map(|b| argmax(chunk.row(b))));
    }
    let accuracy = accuracy(&ds.labels, &predictions, params.num_classes())?;
    Ok(Evaluation {
        loss: loss_sum / ds.len() as f64,
        accuracy,
        predictions,
    })
}

fn accuracy(truth: &[usize], predicted: &[usize], k: usize) -> Result<f64, TrainError> {
    Ok(metrics::report(&metrics::confusion(truth, predicted, k)?)?.accuracy)
}

/// Class probabilities and argmax labels for already-normalized windows.
pub fn predict_windows(params: &LstmParams<f64>, ds: &WindowedDataset) -> Result<Predictions, TrainError> {
    check_shape(params, ds)?;
    let mut labels = Vec::with_capacity(ds.len());
    let mut probabilities = Vec::with_capacity(ds.len());
    for chunk in forward_logits(params, ds)? {
        let p = softmax_rows(&chunk);
        for b in 0..p.rows() {
            labels.push(argmax(p.row(b)));
            probabilities.push(p.row(b).to_vec());
        }
    }
    Ok(Predictions { labels, probabilities })
}

fn check_shape(params: &LstmParams<f64>, ds: &WindowedDataset) -> Result<(), TrainError> {
    if ds.is_empty() {
        return Err(TrainError::Data("no windows".into()));
    }
    if ds.features != params.input_width() {
        return Err(TrainError::Shape(format!(
            "windows have {} features, model expects {}",
            ds.features,
            params.input_width()
        )));
    }
    if ds.num_classes() != params.num_classes() {
        return Err(TrainError::Shape(format!(
            "data has {} classes, model has {}",
            ds.num_classes(),
            params.num_classes()
        )));
    }
    Ok(())
}

/// Trains on `train`, tracking `validation` loss for early stopping, and returns the
/// parameters of the best validation-loss epoch together with the full history.
pub fn train(
    train: &WindowedDataset,
    validation: &WindowedDataset,
    config: &ModelConfig,
) -> Result<(LstmParams<f64>, EpochHistory), TrainError> {
    config.validate()?;
    for (name, ds) in [("training", train), ("validation", validation)] {
        if ds.is_empty() {
            return Err(TrainError::Data(format!("{name} set has no windows")));
        }
        if ds.timesteps != config.timesteps {
            return Err(TrainError::Shape(format!(
                "{name} windows have {} timesteps, config asks for {}",
                ds.timesteps, config.timesteps
            )));
        }
    }
    if train.features != validation.features || train.class_names != validation.class_names {
        return Err(TrainError::Shape("training and validation sets disagree in features or classes".into()));
    }
    let k = train.num_classes();
    let mut params = init_params::<f64>(&architecture_for(config, train.features, k), config.seed)?;
    let mut opt = OptimizerState::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4521);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = EpochHistory::default();
    let mut best: Option<(f64, LstmParams<f64>)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen_labels = Vec::with_capacity(order.len());
        let mut seen_preds = Vec::with_capacity(order.len());
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (loss, mut grads, preds) = batch_gradient(&params, train, idx)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            if let Some(max) = config.clip_global_norm {
                clip_global_norm(&mut grads, max);
            }
            adam_step(&mut params, &grads, &mut opt);
            loss_sum += loss * idx.len() as f64;
            seen_labels.extend(idx.iter().map(|&i| train.labels[i]));
            seen_preds.extend(preds);
        }
        let val = evaluate(&params, validation)?;
        if !val.loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: 0,
                loss: val.loss,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: accuracy(&seen_labels, &seen_preds, k)?,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
        };
        info!(
            "epoch {epoch}/{}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            config.epochs, record.train_loss, record.train_accuracy, record.val_loss, record.val_accuracy
        );
        history.epochs.push(record);
        if best.as_ref().is_none_or(|(l, _)| val.loss < *l) {
            best = Some((val.loss, params.clone()));
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if config.early_stop_patience.is_some_and(|p| stale >= p) {
                info!("early stop after epoch {epoch}: no validation improvement for {stale} epochs");
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

/// Trains on two preprocessed dataset files that must share schema and statistics.
pub fn train_model(
    train_file: &DatasetFile,
    validation_file: &DatasetFile,
    config: &ModelConfig,
) -> Result<TrainedModel, TrainError> {
    if train_file.schema != validation_file.schema {
        return Err(TrainError::SchemaMismatch {
            expected: train_file.schema.as_str().into(),
            found: validation_file.schema.as_str().into(),
        });
    }
    if train_file.stats != validation_file.stats || train_file.feature_columns != validation_file.feature_columns {
        return Err(TrainError::StatsMismatch(
            "training and validation files were normalized differently".into(),
        ));
    }
    let (params, history) = train(&train_file.data, &validation_file.data, config)?;
    Ok(TrainedModel {
        params,
        config: config.clone(),
        stats: train_file.stats.clone(),
        class_names: train_file.data.class_names.clone(),
        schema: train_file.schema,
        feature_columns: train_file.feature_columns.clone(),
        history,
    })
}

impl TrainedModel {
    /// Predicts windows that were normalized with this model's statistics.
    pub fn predict(&self, ds: &WindowedDataset) -> Result<Predictions, TrainError> {
        if ds.timesteps != self.config.timesteps {
            return Err(TrainError::Shape(format!(
                "windows have {} timesteps, model was trained on {}",
                ds.timesteps, self.config.timesteps
            )));
        }
        predict_windows(&self.params, ds)
    }

    /// Checks that a dataset file was prepared the way this model expects.
    pub fn check_dataset(&self, file: &DatasetFile) -> Result<(), TrainError> {
        if file.schema != self.schema {
            return Err(TrainError::SchemaMismatch {
                expected: self.schema.as_str().into(),
                found: file.schema.as_str().into(),
            });
        }
        if file.feature_columns != self.feature_columns || file.data.class_names != self.class_names {
            return Err(TrainError::SchemaMismatch {
                expected: format!("features {:?}", self.feature_columns),
                found: format!("features {:?}", file.feature_columns),
            });
        }
        if file.stats != self.stats {
            return Err(TrainError::StatsMismatch(
                "dataset was normalized with other statistics; pass the raw CSV instead".into(),
            ));
        }
        Ok(())
    }

    pub fn predict_dataset(&self, file: &DatasetFile) -> Result<Predictions, TrainError> {
        self.check_dataset(file)?;
        self.predict(&file.data)
    }

    /// Normalizes raw feature rows with the stored statistics and windows them.
    /// `labels` may be all zeros when unknown.
    pub fn prepare_raw(
        &self,
        schema: &DatasetSchema,
        x: &FeatureMatrix,
        labels: &[usize],
    ) -> Result<WindowedDataset, TrainError> {
        let names: Vec<String> = schema.feature_names().iter().map(|s| s.to_string()).collect();
        if schema.name != self.schema || names != self.feature_columns {
            return Err(TrainError::SchemaMismatch {
                expected: self.schema.as_str().into(),
                found: schema.name.as_str().into(),
            });
        }
        if x.cols() != self.stats.columns() {
            return Err(TrainError::StatsMismatch(format!(
                "{} feature columns, statistics cover {}",
                x.cols(),
                self.stats.columns()
            )));
        }
        let z = zscore_transform(x, &self.stats).map_err(|e| TrainError::Data(e.to_string()))?;
        window(&z, labels, self.config.timesteps, &self.class_names).map_err(|e| TrainError::Data(e.to_string()))
    }
}
