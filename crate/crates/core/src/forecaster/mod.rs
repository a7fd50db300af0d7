//! Hourly load forecasting with stacked LSTM / bidirectional LSTM networks
//! trained by backpropagation through time.

pub mod ann;
mod cell;
pub mod data;
mod model;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{lstm_cell_forward, Gate, LstmCellParams};
pub use data::{synthetic_load, Dataset, FeatureSpec, LoadSeries, MinMaxScaler, Sample, SyntheticLoadConfig};
pub use model::{batch_loss, blstm_forward, gradients, step_outputs, BlstmModel, Head, Layer, ModelConfig, ParamSet, CHECKPOINT_VERSION};
pub use train::{train, Adam, TrainedModel, TrainingConfig};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("data: {0}")]
    Data(String),
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite value in {param}")]
    NonFinite { param: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Self { rows, cols, data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect() }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out += self * x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ * v`
    pub fn t_matvec_add(&self, v: &[f64], out: &mut [f64]) {
        for (r, &vr) in v.iter().enumerate().take(self.rows) {
            if vr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }

    /// `self += a ⊗ b`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (r, &ar) in a.iter().enumerate().take(self.rows) {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, bc) in row.iter_mut().zip(b) {
                *x += ar * bc;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mape_percent: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Points left out of the MAPE mean because the actual value was zero.
    pub mape_excluded: usize,
}

pub fn metrics(predicted: &[f64], actual: &[f64]) -> Result<Metrics, ForecastError> {
    if predicted.len() != actual.len() || actual.is_empty() {
        return Err(ForecastError::Dimension(format!(
            "metrics need equal non-empty series, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let n = actual.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut counted = 0usize;
    for (&p, &a) in predicted.iter().zip(actual) {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
        if a != 0.0 {
            pct += (e / a).abs();
            counted += 1;
        }
    }
    let mape_percent = if counted > 0 { 100.0 * pct / counted as f64 } else { f64::NAN };
    Ok(Metrics { mape_percent, mae: abs / n, rmse: (sq / n).sqrt(), mape_excluded: actual.len() - counted })
}

/// Mean squared error.
pub fn mse(predicted: &[f64], actual: &[f64]) -> f64 {
    predicted.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / actual.len().max(1) as f64
}
