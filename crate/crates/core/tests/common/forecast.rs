//! BLSTM against a same-budget unidirectional LSTM on the synthetic load.

use std::time::Instant;

use hmg_core::forecaster::{
    metrics, mse, synthetic_load, train, Dataset, FeatureSpec, MinMaxScaler, ModelConfig, SyntheticLoadConfig,
    TrainingConfig,
};

pub const TRAIN_FRACTION: f64 = 0.8;

pub struct Comparison {
    pub seed: u64,
    pub blstm_mape: f64,
    pub blstm_mse: f64,
    pub lstm_mse: f64,
    pub seconds: f64,
}

pub fn base_config(seed: u64) -> TrainingConfig {
    TrainingConfig { seed, model: ModelConfig::default(), ..Default::default() }
}

/// Train on the first 80% of targets, score one-step-ahead on the rest (kW).
pub fn compare(seed: u64, config: &TrainingConfig) -> Comparison {
    let started = Instant::now();
    let series = synthetic_load(&SyntheticLoadConfig::default());
    let (train_part, _) = series.split(TRAIN_FRACTION);
    let scaler = MinMaxScaler::fit(&train_part.load_kw).unwrap();
    let all = Dataset::windows(&series, config.model.window, FeatureSpec::default(), scaler).unwrap();
    let cut = train_part.len() - config.model.window;
    let train_set = Dataset { samples: all.samples[..cut].to_vec(), ..all.clone() };
    let test_set = Dataset { samples: all.samples[cut..].to_vec(), ..all.clone() };
    let actual = test_set.targets_kw();

    let score = |bidirectional: bool| {
        let cfg = TrainingConfig { seed, model: ModelConfig { bidirectional, ..config.model.clone() }, ..config.clone() };
        let trained = train(&train_set, &cfg).unwrap();
        let predicted: Vec<f64> = test_set
            .samples
            .iter()
            .map(|s| scaler.unscale(trained.model.predict_scaled(&s.inputs).unwrap()))
            .collect();
        (metrics(&predicted, &actual).unwrap().mape_percent, mse(&predicted, &actual))
    };
    let (blstm_mape, blstm_mse) = score(true);
    let (_, lstm_mse) = score(false);
    Comparison { seed, blstm_mape, blstm_mse, lstm_mse, seconds: started.elapsed().as_secs_f64() }
}
