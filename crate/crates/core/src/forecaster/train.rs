use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Sample};
use super::model::{batch_loss, loss_and_gradients, BlstmModel, Dropout, ModelConfig, ParamSet};
use super::ForecastError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 5e-3, dropout_rate: 0.3, batch_size: 32, seed: 1, model: ModelConfig::default() }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ForecastError::Config("epochs and batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ForecastError::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ForecastError::Config("learning rate must be finite and non-negative".into()));
        }
        self.model.validate()
    }
}

/// Adam with the usual defaults, operating on parameter blocks in order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut [f64]>, grads: impl IntoIterator<Item = &'a [f64]>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            for (x, &gi) in p.iter_mut().zip(g) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                *x -= self.learning_rate * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.epsilon);
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: BlstmModel,
    /// mean training loss per epoch (scaled units, dropout active)
    pub history: Vec<f64>,
}

impl TrainedModel {
    /// Dropout-free MSE over a dataset in scaled units.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64, ForecastError> {
        batch_loss(&self.model.params, &data.samples)
    }
}

/// Mini-batch BPTT with Adam. The model takes its window, features and
/// scaler from the dataset.
pub fn train(data: &Dataset, config: &TrainingConfig) -> Result<TrainedModel, ForecastError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ForecastError::Data("empty dataset".into()));
    }
    let model_cfg = ModelConfig { window: data.window, features: data.features, ..config.model.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::random(&model_cfg, &mut rng);
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| data.samples[i].clone()).collect();
            let dropout = Some(Dropout { rate: config.dropout_rate, rng: &mut rng });
            let (loss, grad) = loss_and_gradients(&params, &batch, dropout)?;
            total += loss * batch.len() as f64;
            let grads: Vec<(String, &[f64])> = grad.named_segments();
            adam.step(params.segments_mut(), grads.into_iter().map(|(_, g)| g));
        }
        history.push(total / data.len() as f64);
    }
    Ok(TrainedModel { model: BlstmModel::new(model_cfg, data.scaler, params)?, history })
}
