//! Single-hidden-layer feed-forward reference model over the flattened
//! input window.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Sample};
use super::train::{Adam, TrainingConfig};
use super::{ForecastError, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn flatten(s: &Sample) -> Vec<f64> {
    s.inputs.iter().flatten().copied().collect()
}

impl AnnModel {
    pub fn random(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let b_in = 1.0 / (inputs as f64).sqrt();
        let b_out = 1.0 / (hidden as f64).sqrt();
        Self {
            w1: Matrix::uniform(hidden, inputs, b_in, rng),
            b1: (0..hidden).map(|_| rng.gen_range(-b_in..=b_in)).collect(),
            w2: (0..hidden).map(|_| rng.gen_range(-b_out..=b_out)).collect(),
            b2: 0.0,
        }
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b1.clone();
        self.w1.matvec_add(x, &mut z);
        z.iter().map(|v| v.tanh()).collect()
    }

    /// Prediction in scaled units.
    pub fn predict(&self, s: &Sample) -> f64 {
        let h = self.hidden_layer(&flatten(s));
        h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2
    }

    fn segments_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1.data, &mut self.b1, &mut self.w2, std::slice::from_mut(&mut self.b2)]
    }

    pub fn mse(&self, data: &Dataset) -> f64 {
        let n = data.len().max(1) as f64;
        data.samples.iter().map(|s| (self.predict(s) - s.target).powi(2)).sum::<f64>() / n
    }
}

/// Trains with the same epochs, batch size, learning rate and seed as the
/// recurrent models; `config.model.hidden` sets the hidden width.
pub fn train_ann(data: &Dataset, config: &TrainingConfig) -> Result<(AnnModel, Vec<f64>), ForecastError> {
    config.validate()?;
    let first = data.samples.first().ok_or_else(|| ForecastError::Data("empty dataset".into()))?;
    let inputs = flatten(first).len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = AnnModel::random(inputs, config.model.hidden, &mut rng);
    let n_params = model.w1.data.len() + 2 * model.b1.len() + 1;
    let mut adam = Adam::new(n_params, config.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut g = AnnModel { w1: Matrix::zeros(model.w1.rows, model.w1.cols), b1: vec![0.0; model.b1.len()], w2: vec![0.0; model.w2.len()], b2: 0.0 };
            for &i in chunk {
                let s = &data.samples[i];
                let x = flatten(s);
                let h = model.hidden_layer(&x);
                let y = h.iter().zip(&model.w2).map(|(a, b)| a * b).sum::<f64>() + model.b2;
                let e = y - s.target;
                total += e * e;
                let dy = 2.0 * e * scale;
                g.b2 += dy;
                let dz: Vec<f64> = h
                    .iter()
                    .zip(&model.w2)
                    .enumerate()
                    .map(|(k, (hk, wk))| {
                        g.w2[k] += dy * hk;
                        dy * wk * (1.0 - hk * hk)
                    })
                    .collect();
                g.w1.add_outer(&dz, &x);
                for (b, d) in g.b1.iter_mut().zip(&dz) {
                    *b += d;
                }
            }
            let grads: Vec<Vec<f64>> = g.segments_mut().iter().map(|s| s.to_vec()).collect();
            adam.step(model.segments_mut(), grads.iter().map(Vec::as_slice));
        }
        history.push(total / data.len() as f64);
    }
    Ok((model, history))
}
