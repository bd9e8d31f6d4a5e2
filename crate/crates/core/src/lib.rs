//! Flow-based network intrusion detection with from-scratch LSTM classifiers.
//!
//! The pipeline: [`data`] ingests and windows labeled flow CSVs (or [`synth`]
//! generates them), [`train`] fits a stacked or bidirectional LSTM built from
//! [`nn`], [`linalg`] and [`loss`], [`model_io`] persists it, and [`metrics`]
//! scores its predictions.

pub mod config;
pub mod container;
pub mod data;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod train;

pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type Vector = linalg::Vector<f64>;
pub type LstmParams = nn::LstmParams<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Vector32 = linalg::Vector<f32>;
pub type LstmParams32 = nn::LstmParams<f32>;
