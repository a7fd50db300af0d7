//! Forecast-then-test replay of meter streams through the detector.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{AttackError, MeterReadings, MeterSeries};
use crate::detector::{process_measurement, DecisionRecord, DetectorParams, MeterRegistry};
use crate::forecaster::{synthetic_load, BlstmModel, LoadSeries, MinMaxScaler, SyntheticLoadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// First 0-based hour tested; earlier hours only fit each meter's scaler
    /// and feed the forecast window.
    pub first_hour: usize,
}

/// Synthetic meters with the given nominal loads, one seed per meter.
pub fn synthetic_meters(nominal_kw: &[(u32, f64)], days: usize, seed: u64) -> MeterReadings {
    let base = SyntheticLoadConfig::default();
    let meters = nominal_kw
        .iter()
        .enumerate()
        .map(|(k, &(meter_id, kw))| {
            let cfg = SyntheticLoadConfig { days, base_kw: kw, seed: seed.wrapping_add(k as u64), ..base.clone() };
            MeterSeries { meter_id, kw: synthetic_load(&cfg).load_kw }
        })
        .collect();
    MeterReadings { start: base.start, meters }
}

/// Feeds every meter-hour from `first_hour` on through a one-step-ahead
/// forecast and the sequential detector. The network is shared across
/// meters; each meter is normalized by its own history before `first_hour`.
pub fn detection_pipeline_replay(
    readings: &MeterReadings,
    model: Option<&BlstmModel>,
    params: &DetectorParams,
    config: ReplayConfig,
) -> Result<Vec<DecisionRecord>, AttackError> {
    let model = model.ok_or_else(|| AttackError::Config("detection replay needs a trained forecaster".into()))?;
    params.validate()?;
    let hours = readings.hours();
    let window = model.config.window;
    if config.first_hour < window.max(2) || config.first_hour > hours {
        return Err(AttackError::Config(format!(
            "first hour {} needs at least {window} hours of history within {hours}",
            config.first_hour
        )));
    }
    let timestamps: Vec<NaiveDateTime> = (0..hours).map(|t| readings.timestamp(t)).collect();
    let mut registry = MeterRegistry::new();
    let mut per_meter = Vec::with_capacity(readings.meters.len());
    for m in &readings.meters {
        let mut local = model.clone();
        local.scaler = MinMaxScaler::fit(&m.kw[..config.first_hour])?;
        let series = LoadSeries { timestamps: timestamps.clone(), load_kw: m.kw[..hours].to_vec() };
        per_meter.push((m.meter_id, local, series));
    }
    let mut log = Vec::new();
    for t in config.first_hour..hours {
        for (id, local, series) in &per_meter {
            let forecast = local.predict_next(series, t)?;
            let measured = series.load_kw[t];
            let v = process_measurement(*id, measured, forecast, &mut registry, params)?;
            log.push(DecisionRecord {
                hour: (t + 1) as u32,
                meter_id: *id,
                measured_kw: measured,
                forecast_kw: forecast,
                sample: v.sample,
                cum_log_ratio: v.cum_log_ratio,
                decision: v.decision,
            });
        }
    }
    Ok(log)
}
