//! Load series I/O, the seeded synthetic load generator, scaling and
//! windowing.

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ForecastError;

const TIMESTAMP_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"];
const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub load_kw: Vec<f64>,
}

impl LoadSeries {
    pub fn len(&self) -> usize {
        self.load_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_kw.is_empty()
    }

    /// Parses `timestamp,load_kw` CSV text.
    pub fn from_csv(text: &str) -> Result<Self, ForecastError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut s = LoadSeries { timestamps: Vec::new(), load_kw: Vec::new() };
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| ForecastError::Data(format!("row {row}: {e}")))?;
            let ts = rec.get(0).unwrap_or_default();
            let t = TIMESTAMP_FORMATS
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(ts, f).ok())
                .ok_or_else(|| ForecastError::Data(format!("row {row}: bad timestamp {ts:?}")))?;
            let v: f64 = rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| ForecastError::Data(format!("row {row}: bad load value")))?;
            s.timestamps.push(t);
            s.load_kw.push(v);
        }
        Ok(s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,load_kw\n");
        for (t, v) in self.timestamps.iter().zip(&self.load_kw) {
            out.push_str(&format!("{},{v:.4}\n", t.format(TIMESTAMP_OUT)));
        }
        out
    }

    /// Chronological split: the first `fraction` of hours and the rest.
    pub fn split(&self, fraction: f64) -> (LoadSeries, LoadSeries) {
        let k = ((self.len() as f64) * fraction).round() as usize;
        let k = k.min(self.len());
        (
            LoadSeries { timestamps: self.timestamps[..k].to_vec(), load_kw: self.load_kw[..k].to_vec() },
            LoadSeries { timestamps: self.timestamps[k..].to_vec(), load_kw: self.load_kw[k..].to_vec() },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLoadConfig {
    pub days: usize,
    pub base_kw: f64,
    /// relative amplitude of the daily cycle
    pub daily_amplitude: f64,
    /// relative dip on Saturdays and Sundays
    pub weekend_dip: f64,
    /// relative standard deviation of the AR(1) noise innovations
    pub noise_std: f64,
    pub ar_coefficient: f64,
    pub start: NaiveDateTime,
    pub seed: u64,
}

impl Default for SyntheticLoadConfig {
    fn default() -> Self {
        Self {
            days: 60,
            base_kw: 1000.0,
            daily_amplitude: 0.3,
            weekend_dip: 0.12,
            noise_std: 0.01,
            ar_coefficient: 0.7,
            // a Monday
            start: NaiveDateTime::parse_from_str("2021-01-04T00:00", TIMESTAMP_OUT).expect("valid literal"),
            seed: 1,
        }
    }
}

/// Daily and weekly cycles with multiplicative AR(1) noise.
pub fn synthetic_load(cfg: &SyntheticLoadConfig) -> LoadSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let innov = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite std");
    let mut noise = 0.0;
    let tau = std::f64::consts::TAU;
    let mut s = LoadSeries { timestamps: Vec::new(), load_kw: Vec::new() };
    for h in 0..cfg.days * 24 {
        let t = cfg.start + Duration::hours(h as i64);
        let hour = t.hour() as f64;
        // morning shoulder and evening peak
        let shape = 0.7 * (tau * (hour - 9.0) / 24.0).sin() + 0.3 * (2.0 * tau * (hour - 5.0) / 24.0).sin();
        let weekend = if t.weekday().num_days_from_monday() >= 5 { 1.0 - cfg.weekend_dip } else { 1.0 };
        noise = cfg.ar_coefficient * noise + innov.sample(&mut rng);
        s.timestamps.push(t);
        s.load_kw.push(cfg.base_kw * (1.0 + cfg.daily_amplitude * shape) * weekend * (1.0 + noise));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    pub fn fit(values: &[f64]) -> Result<Self, ForecastError> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !min.is_finite() || !max.is_finite() {
            return Err(ForecastError::Data("cannot fit a scaler to an empty or non-finite series".into()));
        }
        Ok(Self { min, max })
    }

    fn span(&self) -> f64 {
        if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        }
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / self.span()
    }

    pub fn unscale(&self, v: f64) -> f64 {
        v * self.span() + self.min
    }
}

/// Per-hour input features: the scaled load, then optional calendar
/// encodings on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub day_of_week: bool,
    pub hour_of_day: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { day_of_week: true, hour_of_day: false }
    }
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        1 + 2 * usize::from(self.day_of_week) + 2 * usize::from(self.hour_of_day)
    }

    pub fn features(&self, load_kw: f64, t: NaiveDateTime, scaler: &MinMaxScaler) -> Vec<f64> {
        let tau = std::f64::consts::TAU;
        let mut v = vec![scaler.scale(load_kw)];
        if self.day_of_week {
            let a = tau * t.weekday().num_days_from_monday() as f64 / 7.0;
            v.extend([a.sin(), a.cos()]);
        }
        if self.hour_of_day {
            let a = tau * t.hour() as f64 / 24.0;
            v.extend([a.sin(), a.cos()]);
        }
        v
    }

    pub fn window(&self, series: &LoadSeries, start: usize, end: usize, scaler: &MinMaxScaler) -> Vec<Vec<f64>> {
        (start..end).map(|k| self.features(series.load_kw[k], series.timestamps[k], scaler)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vec<f64>>,
    /// scaled load of the hour after the window
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub window: usize,
    pub features: FeatureSpec,
    pub scaler: MinMaxScaler,
}

impl Dataset {
    /// Sliding windows over the whole series, one sample per target hour.
    pub fn windows(series: &LoadSeries, window: usize, features: FeatureSpec, scaler: MinMaxScaler) -> Result<Self, ForecastError> {
        if window == 0 || series.len() < window + 1 {
            return Err(ForecastError::Data(format!(
                "series of {} hours is shorter than window {window} + 1",
                series.len()
            )));
        }
        let samples = (window..series.len())
            .map(|end| Sample {
                inputs: features.window(series, end - window, end, &scaler),
                target: scaler.scale(series.load_kw[end]),
            })
            .collect();
        Ok(Self { samples, window, features, scaler })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets_kw(&self) -> Vec<f64> {
        self.samples.iter().map(|s| self.scaler.unscale(s.target)).collect()
    }
}
