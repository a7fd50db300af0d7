use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::{Duration, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hmg_core::attack::{
    detection_pipeline_replay, reference_spec, run_attack_scenario, AttackError, AttackParams, AttackSpec, MeterReadings, MeterSeries,
    ReplayConfig, BASELINE_DISPATCH_CSV,
};

use hmg_core::detector::{
    calibrate as calibrate_ratios, parse_replay_csv, replay_pairs, DecisionRecord, DetectorParams, REPLAY_PAIRS_CSV,
};
use hmg_core::forecaster::ann::train_ann;
use hmg_core::forecaster::{
    metrics, mse, synthetic_load, train as train_model, BlstmModel, Dataset, FeatureSpec, LoadSeries, MinMaxScaler,
    ModelConfig, SyntheticLoadConfig, TrainingConfig,
};
use hmg_core::grid::{load_scenario, Network, Scenario, IEEE33_HYBRID_JSON, REFERENCE_SCENARIO_CSV};
use hmg_core::lora::{decode_reading, open, MacFrame, PhyFrame, SessionKeys, READING_LEN};
use hmg_core::scheduler::{dispatch_csv_header, hourly_flow, optimize, OptimizerConfig, Schedule};

use crate::report::{self, Cell, Provenance, Table};
use crate::{Classify, Failure, Opts};

type Outcome = Result<Vec<PathBuf>, Failure>;

const KW: usize = 3;

/// A named input and its bytes, either read from disk or bundled.
struct Source {
    name: String,
    text: String,
}

fn read(path: &Path) -> Result<Source, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).invalid()?;
    Ok(Source { name: path.display().to_string(), text })
}

fn read_or(path: Option<&PathBuf>, bundled_name: &str, bundled: &str) -> Result<Source, Failure> {
    match path {
        Some(p) => read(p),
        None => Ok(Source { name: format!("bundled:{bundled_name}"), text: bundled.to_string() }),
    }
}

fn required<'a>(path: Option<&'a PathBuf>, what: &str) -> Result<&'a PathBuf, Failure> {
    path.ok_or_else(|| Failure::Invalid(anyhow!("--input {what} is required")))
}

fn params<T: DeserializeOwned + Default>(opts: &Opts) -> Result<(T, Option<Source>), Failure> {
    match &opts.params {
        None => Ok((T::default(), None)),
        Some(p) => {
            let src = read(p)?;
            let v = serde_json::from_str(&src.text).with_context(|| format!("invalid parameters in {}", src.name)).invalid()?;
            Ok((v, Some(src)))
        }
    }
}

fn network(opts: &Opts) -> Result<(Network, Source), Failure> {
    let src = read_or(opts.network.as_ref(), "ieee33_hybrid.json", IEEE33_HYBRID_JSON)?;
    let net = Network::from_json(&src.text).with_context(|| format!("invalid network {}", src.name)).invalid()?;
    Ok((net, src))
}

fn scenario(opts: &Opts) -> Result<(Scenario, Source), Failure> {
    let src = read_or(opts.scenario.as_ref(), "reference_scenario.csv", REFERENCE_SCENARIO_CSV)?;
    let s = load_scenario(&src.text).with_context(|| format!("invalid scenario {}", src.name)).invalid()?;
    Ok((s, src))
}

fn provenance(command: &'static str, seed: u64, effective: &impl Serialize, inputs: &[&Source]) -> Provenance {
    let params = serde_json::to_value(effective).expect("parameters serialize");
    let named: Vec<(&str, &[u8])> = inputs.iter().map(|s| (s.name.as_str(), s.text.as_bytes())).collect();
    Provenance::new(command, seed, &params, &named)
}

fn emit(opts: &Opts, stem: &str, table: &Table, prov: &Provenance) -> Result<PathBuf, Failure> {
    report::write(&opts.out, stem, table, prov, opts.format).runtime()
}

fn num(v: f64, decimals: usize) -> Cell {
    Cell::Num(v, decimals)
}

pub fn schedule(opts: &Opts) -> Outcome {
    let (net, net_src) = network(opts)?;
    let (scn, scn_src) = scenario(opts)?;
    let (mut config, _) = params::<OptimizerConfig>(opts)?;
    config.seed = opts.seed;
    config.validate().invalid()?;
    net.validate().invalid()?;
    scn.validate().invalid()?;

    let result = optimize(&scn, &net, &config).runtime()?;
    let mut loss_kwh = 0.0;
    let mut max_dev: f64 = 0.0;
    for t in 0..scn.horizon() {
        let flow = hourly_flow(&result.schedule, &scn, &net, t)
            .with_context(|| format!("power flow failed at hour {}", t + 1))
            .runtime()?;
        if !flow.converged {
            return Err(Failure::Runtime(anyhow!("power flow did not converge at hour {}", t + 1)));
        }
        loss_kwh += flow.total_loss;
        max_dev = max_dev.max(flow.max_voltage_deviation());
    }

    let prov = provenance("schedule", opts.seed, &config, &[&net_src, &scn_src]);
    let table = dispatch_table(&result.schedule, &dispatch_csv_header(&net.dg_units));
    let mut summary = Table::new(["total_loss_kwh", "operating_cost", "max_voltage_deviation_pu", "feasible", "violations"]);
    summary.push(vec![
        num(loss_kwh, KW),
        num(result.cost, 2),
        num(max_dev, 6),
        Cell::Int(i64::from(result.report.is_feasible())),
        Cell::Int(result.report.violations.len() as i64),
    ]);
    Ok(vec![emit(opts, "schedule", &table, &prov)?, emit(opts, "summary", &summary, &prov)?])
}

fn dispatch_table(s: &Schedule, header: &str) -> Table {
    let mut table = Table::new(header.split(','));
    for t in 0..s.hours() {
        let mut row = vec![Cell::Int(t as i64 + 1)];
        row.extend((0..s.units()).map(|i| num(if s.u[t][i] { s.p_g[t][i] } else { 0.0 }, KW)));
        row.push(num(s.p_conv[t], KW));
        table.push(row);
    }
    table
}

fn attack_failure(e: AttackError) -> Failure {
    match e {
        AttackError::Spec(_) | AttackError::Config(_) | AttackError::Grid(_) => Failure::Invalid(e.into()),
        other => Failure::Runtime(other.into()),
    }
}

pub fn attack(opts: &Opts) -> Outcome {
    let (net, net_src) = network(opts)?;
    let (scn, scn_src) = scenario(opts)?;
    let (attack_params, _) = params::<AttackParams>(opts)?;
    let spec_src = match &opts.attack_spec {
        Some(p) => read(p)?,
        None => Source { name: "bundled:reference_spec".into(), text: reference_spec().to_json() },
    };
    let spec = AttackSpec::from_json(&spec_src.text).map_err(attack_failure)?;
    let base_src = read_or(opts.input.as_ref(), "baseline_dispatch.csv", BASELINE_DISPATCH_CSV)?;
    let baseline = Schedule::from_dispatch_csv(&base_src.text, &net)
        .with_context(|| format!("invalid dispatch {}", base_src.name))
        .invalid()?;

    let report = run_attack_scenario(&scn, &net, &baseline, &spec, &attack_params).map_err(attack_failure)?;
    let mut table = Table::new(report.csv_header().split(','));
    for h in &report.hours {
        let mut row = vec![Cell::Int(h.hour as i64)];
        row.extend(h.output_kw.iter().map(|&p| num(p, KW)));
        let shut: Vec<String> = h.emergency_shutdowns.iter().map(u32::to_string).collect();
        row.extend([
            num(h.p_conv_kw, KW),
            num(h.observed_imbalance_kw, KW),
            num(h.load_shed_kw, KW),
            num(h.loss_kw, KW),
            Cell::text(shut.join(";")),
        ]);
        table.push(row);
    }
    table.notes.push(report.csv_footer().trim_start_matches('#').trim().to_string());
    let prov = provenance("attack", opts.seed, &json!({ "params": attack_params, "spec": spec }), &[&net_src, &scn_src, &base_src]);
    Ok(vec![emit(opts, "attack", &table, &prov)?])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainParams {
    training: TrainingConfig,
    /// generator used when no `--input` series is given
    synthetic: SyntheticLoadConfig,
    train_fraction: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { training: TrainingConfig::default(), synthetic: SyntheticLoadConfig::default(), train_fraction: 0.8 }
    }
}

pub fn train(opts: &Opts) -> Outcome {
    let (mut p, _) = params::<TrainParams>(opts)?;
    p.training.seed = opts.seed;
    p.training.validate().invalid()?;
    if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
        return Err(Failure::Invalid(anyhow!("train_fraction {} outside (0,1)", p.train_fraction)));
    }
    let (series, src) = match &opts.input {
        Some(path) => {
            let src = read(path)?;
            let s = LoadSeries::from_csv(&src.text).with_context(|| format!("invalid load series {}", src.name)).invalid()?;
            (s, src)
        }
        None => {
            let s = synthetic_load(&p.synthetic);
            (s, Source { name: "synthetic".into(), text: serde_json::to_string(&p.synthetic).expect("serialize") })
        }
    };
    let window = p.training.model.window;
    let (train_part, _) = series.split(p.train_fraction);
    if train_part.len() <= window || series.len() <= train_part.len() {
        return Err(Failure::Invalid(anyhow!("{} hours are too few for window {window}", series.len())));
    }
    let scaler = MinMaxScaler::fit(&train_part.load_kw).invalid()?;
    let all = Dataset::windows(&series, window, FeatureSpec::default(), scaler).invalid()?;
    let cut = train_part.len() - window;
    let train_set = Dataset { samples: all.samples[..cut].to_vec(), ..all.clone() };
    let test_set = Dataset { samples: all.samples[cut..].to_vec(), ..all.clone() };
    let actual = test_set.targets_kw();

    let recurrent = |bidirectional: bool| -> Result<(BlstmModel, Vec<f64>), Failure> {
        let cfg = TrainingConfig { model: ModelConfig { bidirectional, ..p.training.model.clone() }, ..p.training.clone() };
        let trained = train_model(&train_set, &cfg).runtime()?;
        let predicted = test_set
            .samples
            .iter()
            .map(|s| trained.model.predict_scaled(&s.inputs).map(|v| scaler.unscale(v)))
            .collect::<Result<Vec<_>, _>>()
            .runtime()?;
        Ok((trained.model, predicted))
    };
    let (blstm, blstm_pred) = recurrent(true)?;
    let (_, lstm_pred) = recurrent(false)?;
    let (ann, _) = train_ann(&train_set, &p.training).runtime()?;
    let ann_pred: Vec<f64> = test_set.samples.iter().map(|s| scaler.unscale(ann.predict(s))).collect();

    let mut table = Table::new(["model", "mape_percent", "mae_kw", "rmse_kw", "mse_kw2"]);
    for (name, pred) in [("BLSTM", &blstm_pred), ("LSTM", &lstm_pred), ("ANN", &ann_pred)] {
        let m = metrics(pred, &actual).runtime()?;
        table.push(vec![Cell::text(name), num(m.mape_percent, 4), num(m.mae, 4), num(m.rmse, 4), num(mse(pred, &actual), 4)]);
    }
    let prov = provenance("train", opts.seed, &p, &[&src]);
    fs::create_dir_all(&opts.out).with_context(|| format!("cannot create output directory {}", opts.out.display())).runtime()?;
    let model_path = opts.out.join("model.json");
    fs::write(&model_path, blstm.to_json()).with_context(|| format!("cannot write {}", model_path.display())).runtime()?;
    Ok(vec![model_path, emit(opts, "metrics", &table, &prov)?])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct DetectParams {
    detector: DetectorParams,
    /// first tested hour (0-based) when replaying meter readings
    first_hour: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { detector: DetectorParams::reference(), first_hour: 168 }
    }
}

#[derive(Debug, Deserialize)]
struct ReadingRow {
    timestamp: String,
    meter_id: u32,
    load_kw: f64,
}

const TIMESTAMP_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"];

/// Long-format `timestamp,meter_id,load_kw` rows, hourly and aligned across meters.
fn parse_readings(src: &Source) -> anyhow::Result<MeterReadings> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(src.text.as_bytes());
    let mut per_meter: BTreeMap<u32, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<ReadingRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", src.name, i + 1))?;
        let ts = TIMESTAMP_FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(&row.timestamp, f).ok())
            .ok_or_else(|| anyhow!("{} row {}: bad timestamp {:?}", src.name, i + 1, row.timestamp))?;
        per_meter.entry(row.meter_id).or_default().push((ts, row.load_kw));
    }
    let mut start = None;
    let mut meters = Vec::new();
    for (meter_id, mut rows) in per_meter {
        rows.sort_by_key(|r| r.0);
        let first = rows[0].0;
        if *start.get_or_insert(first) != first {
            return Err(anyhow!("meter {meter_id} starts at {first}, not with the other meters"));
        }
        for (k, (ts, _)) in rows.iter().enumerate() {
            if *ts != first + Duration::hours(k as i64) {
                return Err(anyhow!("meter {meter_id}: readings are not hourly at {ts}"));
            }
        }
        meters.push(MeterSeries { meter_id, kw: rows.into_iter().map(|r| r.1).collect() });
    }
    let start = start.ok_or_else(|| anyhow!("{} holds no readings", src.name))?;
    Ok(MeterReadings { start, meters })
}

fn decision_table(log: &[DecisionRecord]) -> Table {
    let mut table = Table::new(hmg_core::detector::DECISION_LOG_HEADER.split(','));
    for r in log {
        table.push(vec![
            Cell::Int(i64::from(r.hour)),
            Cell::Int(i64::from(r.meter_id)),
            num(r.measured_kw, KW),
            num(r.forecast_kw, KW),
            Cell::text(r.sample.to_string()),
            num(r.cum_log_ratio, 4),
            Cell::text(r.decision.to_string()),
        ]);
    }
    table
}

pub fn detect(opts: &Opts) -> Outcome {
    let (p, _) = params::<DetectParams>(opts)?;
    p.detector.validate().invalid()?;
    let (log, inputs) = match &opts.model {
        Some(model_path) => {
            let model_src = read(model_path)?;
            let model = BlstmModel::from_json(&model_src.text)
                .with_context(|| format!("invalid checkpoint {}", model_src.name))
                .invalid()?;
            let src = read(required(opts.input.as_ref(), "meter readings")?)?;
            let readings = parse_readings(&src).invalid()?;
            let log = detection_pipeline_replay(&readings, Some(&model), &p.detector, ReplayConfig { first_hour: p.first_hour })
                .map_err(attack_failure)?;
            (log, vec![model_src, src])
        }
        None => {
            let src = read_or(opts.input.as_ref(), "replay_pairs.csv", REPLAY_PAIRS_CSV)?;
            let pairs = parse_replay_csv(&src.text).invalid()?;
            (replay_pairs(&pairs, &p.detector).invalid()?, vec![src])
        }
    };
    let prov = provenance("detect", opts.seed, &p, &inputs.iter().collect::<Vec<_>>());
    Ok(vec![emit(opts, "decisions", &decision_table(&log), &prov)?])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct CalibrateParams {
    coverage: f64,
}

impl Default for CalibrateParams {
    fn default() -> Self {
        Self { coverage: 0.99 }
    }
}

/// Ratios from a `ratio` column or from `measured_kw,forecast_kw` pairs.
fn parse_ratios(src: &Source) -> anyhow::Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(src.text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    enum Layout {
        Ratio(usize),
        Pair(usize, usize),
    }
    let layout = match (col("ratio"), col("measured_kw"), col("forecast_kw")) {
        (Some(r), _, _) => Layout::Ratio(r),
        (None, Some(m), Some(f)) => Layout::Pair(m, f),
        _ => return Err(anyhow!("{} needs a ratio column or measured_kw and forecast_kw columns", src.name)),
    };
    let field = |rec: &csv::StringRecord, k: usize| rec.get(k).and_then(|v| v.parse::<f64>().ok());
    let pick = |rec: &csv::StringRecord| match layout {
        Layout::Ratio(r) => field(rec, r),
        Layout::Pair(m, f) => Some((field(rec, m)? - field(rec, f)?).abs() / field(rec, f)?),
    };
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.with_context(|| format!("{} row {}", src.name, i + 1))?;
            pick(&rec).ok_or_else(|| anyhow!("{} row {}: not numeric", src.name, i + 1))
        })
        .collect()
}

pub fn calibrate(opts: &Opts) -> Outcome {
    let (p, _) = params::<CalibrateParams>(opts)?;
    let src = read(required(opts.input.as_ref(), "residual history")?)?;
    let ratios = parse_ratios(&src).invalid()?;
    let cal = calibrate_ratios(&ratios, p.coverage).invalid()?;
    let mut table = Table::new(["le", "ue", "p0", "samples"]);
    table.push(vec![num(cal.le, 6), num(cal.ue, 6), num(cal.p0, 6), Cell::Int(cal.samples as i64)]);
    let prov = provenance("calibrate", opts.seed, &p, &[&src]);
    Ok(vec![emit(opts, "calibration", &table, &prov)?])
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct CodecParams {
    /// hex
    nwk_s_key: Option<String>,
    /// hex
    app_s_key: Option<String>,
}

impl CodecParams {
    fn keys(&self) -> anyhow::Result<Option<SessionKeys>> {
        let key = |name: &str, v: &str| -> anyhow::Result<[u8; 16]> {
            let bytes = hex::decode(v.trim()).with_context(|| format!("{name} is not hex"))?;
            bytes.try_into().map_err(|b: Vec<u8>| anyhow!("{name} has {} bytes, expected 16", b.len()))
        };
        match (&self.nwk_s_key, &self.app_s_key) {
            (Some(n), Some(a)) => Ok(Some(SessionKeys { nwk_s_key: key("nwk_s_key", n)?, app_s_key: key("app_s_key", a)? })),
            (None, None) => Ok(None),
            _ => Err(anyhow!("both nwk_s_key and app_s_key are needed")),
        }
    }
}

/// Hex digits with `#` comment lines and whitespace ignored.
fn parse_hex_dump(src: &Source) -> anyhow::Result<Vec<u8>> {
    let digits: String = src
        .text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::chars)
        .filter(|c| !c.is_whitespace())
        .collect();
    let bytes = hex::decode(&digits).with_context(|| format!("{} is not a hex dump", src.name))?;
    if bytes.is_empty() {
        return Err(anyhow!("{} holds no bytes", src.name));
    }
    Ok(bytes)
}

fn flatten_json(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, inner) in map {
                flatten_json(&format!("{prefix}.{k}"), inner, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), "absent".into())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn inspect(bytes: &[u8], keys: Option<&SessionKeys>) -> anyhow::Result<Vec<(String, String)>> {
    let mut fields = vec![("bytes".to_string(), bytes.len().to_string())];
    let mut reading_bytes = None;
    if bytes.len() == READING_LEN && decode_reading(bytes).is_ok() {
        fields.push(("layer".into(), "reading".into()));
        reading_bytes = Some(bytes.to_vec());
    } else {
        let mac_bytes = match PhyFrame::from_bytes(bytes) {
            Ok(phy) => {
                fields.push(("layer".into(), "phy".into()));
                fields.push(("phy.payload_length".into(), phy.phdr.payload_length.to_string()));
                fields.push(("phy.coding_rate".into(), format!("4/{}", 4 + phy.phdr.coding_rate)));
                fields.push(("phy.crc_present".into(), phy.phdr.crc_present.to_string()));
                phy.payload
            }
            Err(_) => {
                fields.push(("layer".into(), "mac".into()));
                bytes.to_vec()
            }
        };
        let mac = MacFrame::from_bytes(&mac_bytes)?;
        fields.push(("mac.mtype".into(), format!("{:?}", mac.mhdr.mtype)));
        fields.push(("mac.major".into(), mac.mhdr.major.to_string()));
        fields.push(("mac.mic".into(), hex::encode(mac.mic)));
        if mac.mac_payload.len() >= 7 {
            let p = &mac.mac_payload;
            fields.push(("mac.dev_addr".into(), format!("{:08X}", u32::from_le_bytes([p[0], p[1], p[2], p[3]]))));
            fields.push(("mac.fcnt".into(), u16::from_le_bytes([p[5], p[6]]).to_string()));
        }
        match keys {
            None => fields.push(("mac.mic_check".into(), "skipped: no session keys".into())),
            Some(k) => match open(&mac, k) {
                Err(rejection) => fields.push(("mac.mic_check".into(), format!("rejected: {rejection:?}"))),
                Ok(app) => {
                    fields.push(("mac.mic_check".into(), "ok".into()));
                    let port = app.fport.map_or_else(|| "none".to_string(), |p| p.to_string());
                    fields.push(("app.fport".into(), port));
                    fields.push(("app.payload_bytes".into(), app.frm_payload.len().to_string()));
                    if app.frm_payload.len() == READING_LEN {
                        reading_bytes = Some(app.frm_payload);
                    }
                }
            },
        }
    }
    if let Some(b) = reading_bytes {
        let reading = decode_reading(&b)?;
        let si = serde_json::to_value(reading.to_si())?;
        flatten_json("reading", &si, &mut fields);
        let invalid = reading.invalid_fields();
        fields.push(("reading.invalid_fields".into(), invalid.join(";")));
    }
    Ok(fields)
}

pub fn codec_inspect(opts: &Opts) -> Outcome {
    let (p, params_src) = params::<CodecParams>(opts)?;
    let keys = p.keys().invalid()?;
    let src = read(required(opts.input.as_ref(), "hex dump")?)?;
    let bytes = parse_hex_dump(&src).invalid()?;
    let fields = inspect(&bytes, keys.as_ref()).invalid()?;
    let mut table = Table::new(["field", "value"]);
    for (k, v) in fields {
        table.push(vec![Cell::Text(k), Cell::Text(v)]);
    }
    let mut inputs = vec![&src];
    if let Some(ps) = &params_src {
        inputs.push(ps);
    }
    let prov = provenance("codec-inspect", opts.seed, &json!({}), &inputs);
    Ok(vec![emit(opts, "frame", &table, &prov)?])
}
