use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cell::{step, step_backward, LstmCellParams, StepCache};
use super::data::{FeatureSpec, LoadSeries, MinMaxScaler, Sample};
use super::ForecastError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    /// stacked recurrent layers
    pub depth: usize,
    pub bidirectional: bool,
    /// input hours per prediction
    pub window: usize,
    pub features: FeatureSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 32, depth: 2, bidirectional: true, window: 14, features: FeatureSpec::default() }
    }
}

impl ModelConfig {
    /// Two 128-cell layers.
    pub fn large() -> Self {
        Self { hidden: 128, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.hidden == 0 || self.depth == 0 || self.window == 0 {
            return Err(ForecastError::Config("hidden, depth and window must be positive".into()));
        }
        Ok(())
    }

    fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub forward: LstmCellParams,
    pub backward: Option<LstmCellParams>,
}

impl Layer {
    fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    fn output_dim(&self) -> usize {
        self.hidden() * if self.backward.is_some() { 2 } else { 1 }
    }
}

/// Linear read-out of the final layer's hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub w_fwd: Vec<f64>,
    /// empty for a unidirectional model
    pub w_bwd: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<Layer>,
    pub head: Head,
}

impl ParamSet {
    pub fn random(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut input = config.features.dim();
        let mut layers = Vec::with_capacity(config.depth);
        for _ in 0..config.depth {
            let forward = LstmCellParams::random(input, config.hidden, rng);
            let backward = config.bidirectional.then(|| LstmCellParams::random(input, config.hidden, rng));
            layers.push(Layer { forward, backward });
            input = config.hidden * config.directions();
        }
        let bound = 1.0 / (input as f64).sqrt();
        let mut w = |n: usize| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<f64>>();
        let w_fwd = w(config.hidden);
        let w_bwd = if config.bidirectional { w(config.hidden) } else { Vec::new() };
        Self { layers, head: Head { w_fwd, w_bwd, bias: 0.0 } }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for seg in z.segments_mut() {
            seg.fill(0.0);
        }
        z
    }

    /// Named parameter blocks in a fixed order.
    pub fn named_segments(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (dir, cell) in [("fwd", Some(&layer.forward)), ("bwd", layer.backward.as_ref())] {
                if let Some(cell) = cell {
                    for (name, seg) in ["w_x", "w_h", "b"].iter().zip(cell.segments()) {
                        out.push((format!("layer{l}.{dir}.{name}"), seg));
                    }
                }
            }
        }
        out.push(("head.w_fwd".into(), &self.head.w_fwd[..]));
        out.push(("head.w_bwd".into(), &self.head.w_bwd[..]));
        out.push(("head.bias".into(), std::slice::from_ref(&self.head.bias)));
        out
    }

    pub fn segments_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.forward.segments_mut());
            if let Some(b) = layer.backward.as_mut() {
                out.extend(b.segments_mut());
            }
        }
        out.push(&mut self.head.w_fwd[..]);
        out.push(&mut self.head.w_bwd[..]);
        out.push(std::slice::from_mut(&mut self.head.bias));
        out
    }

    pub fn len(&self) -> usize {
        self.named_segments().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.named_segments().into_iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), ForecastError> {
        if flat.len() != self.len() {
            return Err(ForecastError::Dimension(format!("{} values for {} parameters", flat.len(), self.len())));
        }
        let mut off = 0;
        for seg in self.segments_mut() {
            seg.copy_from_slice(&flat[off..off + seg.len()]);
            off += seg.len();
        }
        Ok(())
    }

    /// Checks shapes against a config.
    pub fn validate(&self, config: &ModelConfig) -> Result<(), ForecastError> {
        if self.layers.len() != config.depth {
            return Err(ForecastError::Dimension(format!("{} layers, config says {}", self.layers.len(), config.depth)));
        }
        let mut input = config.features.dim();
        for (l, layer) in self.layers.iter().enumerate() {
            let cells = std::iter::once(&layer.forward).chain(layer.backward.as_ref());
            for cell in cells {
                cell.validate()?;
                if cell.hidden() != config.hidden || cell.input() != input {
                    return Err(ForecastError::Dimension(format!("layer {l} cell shape")));
                }
            }
            if layer.backward.is_some() != config.bidirectional {
                return Err(ForecastError::Dimension(format!("layer {l} direction count")));
            }
            input = layer.output_dim();
        }
        let bwd = if config.bidirectional { config.hidden } else { 0 };
        if self.head.w_fwd.len() != config.hidden || self.head.w_bwd.len() != bwd {
            return Err(ForecastError::Dimension("head shape".into()));
        }
        Ok(())
    }
}

struct LayerCache {
    fwd: Vec<StepCache>,
    /// indexed by time, not processing order
    bwd: Vec<StepCache>,
    out: Vec<Vec<f64>>,
    mask: Option<Vec<Vec<f64>>>,
}

pub(crate) struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

fn layer_forward<R: Rng>(layer: &Layer, inputs: &[Vec<f64>], dropout: Option<&mut Dropout<R>>) -> LayerCache {
    let hd = layer.hidden();
    let n = inputs.len();
    let mut fwd = Vec::with_capacity(n);
    let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
    for x in inputs {
        let s = step(&layer.forward, x, &h, &c);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        fwd.push(s);
    }
    let mut bwd = Vec::new();
    if let Some(cell) = &layer.backward {
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        for x in inputs.iter().rev() {
            let s = step(cell, x, &h, &c);
            h.clone_from(&s.h);
            c.clone_from(&s.c);
            bwd.push(s);
        }
        bwd.reverse();
    }
    let mut out: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let mut v = fwd[t].h.clone();
            if let Some(b) = bwd.get(t) {
                v.extend_from_slice(&b.h);
            }
            v
        })
        .collect();
    let mask = dropout.filter(|d| d.rate > 0.0).map(|d| {
        let keep = 1.0 / (1.0 - d.rate);
        let m: Vec<Vec<f64>> =
            out.iter().map(|v| v.iter().map(|_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { keep }).collect()).collect();
        for (v, mv) in out.iter_mut().zip(&m) {
            for (x, k) in v.iter_mut().zip(mv) {
                *x *= k;
            }
        }
        m
    });
    LayerCache { fwd, bwd, out, mask }
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    y: f64,
}

fn head_output(head: &Head, out: &[f64]) -> f64 {
    let hd = head.w_fwd.len();
    let f: f64 = head.w_fwd.iter().zip(&out[..hd]).map(|(a, b)| a * b).sum();
    let b: f64 = head.w_bwd.iter().zip(&out[hd..]).map(|(a, b)| a * b).sum();
    f + b + head.bias
}

fn forward_cached<R: Rng>(params: &ParamSet, seq: &[Vec<f64>], mut dropout: Option<Dropout<R>>) -> ForwardCache {
    let mut layers: Vec<LayerCache> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let input = layers.last().map_or(seq, |c| &c.out[..]);
        let cache = layer_forward(layer, input, dropout.as_mut());
        layers.push(cache);
    }
    let last = layers.last().expect("at least one layer");
    let y = head_output(&params.head, last.out.last().expect("non-empty window"));
    ForwardCache { layers, y }
}

fn backward(params: &ParamSet, cache: &ForwardCache, dy: f64, grad: &mut ParamSet) {
    let top = cache.layers.last().expect("at least one layer");
    let n = top.out.len();
    let hd = params.head.w_fwd.len();
    let last = &top.out[n - 1];
    for (g, x) in grad.head.w_fwd.iter_mut().zip(&last[..hd]) {
        *g += dy * x;
    }
    for (g, x) in grad.head.w_bwd.iter_mut().zip(&last[hd..]) {
        *g += dy * x;
    }
    grad.head.bias += dy;

    let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; last.len()]; n];
    for (k, w) in params.head.w_fwd.iter().chain(&params.head.w_bwd).enumerate() {
        d_out[n - 1][k] = dy * w;
    }

    for (l, (layer, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        if let Some(mask) = &lc.mask {
            for (d, m) in d_out.iter_mut().zip(mask) {
                for (x, k) in d.iter_mut().zip(m) {
                    *x *= k;
                }
            }
        }
        let lh = layer.hidden();
        let mut d_in = vec![vec![0.0; layer.forward.input()]; n];
        let gl = &mut grad.layers[l];

        let (mut dh_next, mut dc_next) = (vec![0.0; lh], vec![0.0; lh]);
        for t in (0..n).rev() {
            let dh: Vec<f64> = (0..lh).map(|k| d_out[t][k] + dh_next[k]).collect();
            let (dx, dhp, dcp) = step_backward(&layer.forward, &lc.fwd[t], &dh, &dc_next, &mut gl.forward);
            for (a, b) in d_in[t].iter_mut().zip(&dx) {
                *a += b;
            }
            dh_next = dhp;
            dc_next = dcp;
        }
        if let (Some(cell), Some(gcell)) = (&layer.backward, gl.backward.as_mut()) {
            let (mut dh_next, mut dc_next) = (vec![0.0; lh], vec![0.0; lh]);
            for t in 0..n {
                let dh: Vec<f64> = (0..lh).map(|k| d_out[t][lh + k] + dh_next[k]).collect();
                let (dx, dhp, dcp) = step_backward(cell, &lc.bwd[t], &dh, &dc_next, gcell);
                for (a, b) in d_in[t].iter_mut().zip(&dx) {
                    *a += b;
                }
                dh_next = dhp;
                dc_next = dcp;
            }
        }
        d_out = d_in;
    }
}

fn check_window(params: &ParamSet, seq: &[Vec<f64>], window: Option<usize>) -> Result<(), ForecastError> {
    if seq.is_empty() || window.is_some_and(|w| w != seq.len()) {
        return Err(ForecastError::Dimension(format!("sequence length {} does not match the window", seq.len())));
    }
    let dim = params.layers.first().map(|l| l.forward.input()).unwrap_or(0);
    if seq.iter().any(|x| x.len() != dim) {
        return Err(ForecastError::Dimension(format!("feature vectors must have {dim} entries")));
    }
    Ok(())
}

/// Batch MSE and its gradient. With `dropout`, masks are drawn from its rng.
pub(crate) fn loss_and_gradients<R: Rng>(
    params: &ParamSet,
    batch: &[Sample],
    mut dropout: Option<Dropout<R>>,
) -> Result<(f64, ParamSet), ForecastError> {
    if batch.is_empty() {
        return Err(ForecastError::Data("empty batch".into()));
    }
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        check_window(params, &s.inputs, None)?;
        let d = dropout.as_mut().map(|d| Dropout { rate: d.rate, rng: &mut *d.rng });
        let cache = forward_cached(params, &s.inputs, d);
        if !cache.y.is_finite() {
            return Err(ForecastError::NonFinite { param: "prediction".into() });
        }
        let e = cache.y - s.target;
        loss += e * e * scale;
        backward(params, &cache, 2.0 * e * scale, &mut grad);
    }
    for (name, seg) in grad.named_segments() {
        if seg.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::NonFinite { param: name });
        }
    }
    Ok((loss, grad))
}

/// Exact gradient of the batch mean squared error (no dropout).
pub fn gradients(params: &ParamSet, batch: &[Sample]) -> Result<ParamSet, ForecastError> {
    loss_and_gradients::<rand_chacha::ChaCha8Rng>(params, batch, None).map(|(_, g)| g)
}

/// Batch mean squared error without dropout.
pub fn batch_loss(params: &ParamSet, batch: &[Sample]) -> Result<f64, ForecastError> {
    let mut loss = 0.0;
    for s in batch {
        let e = blstm_forward(&s.inputs, params)? - s.target;
        loss += e * e;
    }
    Ok(loss / batch.len().max(1) as f64)
}

/// Per-step outputs of the top layer through the head.
pub fn step_outputs(seq: &[Vec<f64>], params: &ParamSet) -> Result<Vec<f64>, ForecastError> {
    check_window(params, seq, None)?;
    let cache = forward_cached::<rand_chacha::ChaCha8Rng>(params, seq, None);
    let top = cache.layers.last().expect("at least one layer");
    Ok(top.out.iter().map(|o| head_output(&params.head, o)).collect())
}

/// Final-step prediction for one window (scaled units, no dropout).
pub fn blstm_forward(seq: &[Vec<f64>], params: &ParamSet) -> Result<f64, ForecastError> {
    check_window(params, seq, None)?;
    Ok(forward_cached::<rand_chacha::ChaCha8Rng>(params, seq, None).y)
}

/// Trained network with its input pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlstmModel {
    pub version: u32,
    pub config: ModelConfig,
    pub scaler: MinMaxScaler,
    pub params: ParamSet,
}

impl BlstmModel {
    pub fn new(config: ModelConfig, scaler: MinMaxScaler, params: ParamSet) -> Result<Self, ForecastError> {
        config.validate()?;
        params.validate(&config)?;
        Ok(Self { version: CHECKPOINT_VERSION, config, scaler, params })
    }

    /// Prediction in scaled units for a prepared window.
    pub fn predict_scaled(&self, seq: &[Vec<f64>]) -> Result<f64, ForecastError> {
        check_window(&self.params, seq, Some(self.config.window))?;
        Ok(forward_cached::<rand_chacha::ChaCha8Rng>(&self.params, seq, None).y)
    }

    /// Predicts the hour following `series[end - window..end]`, in kW.
    pub fn predict_next(&self, series: &LoadSeries, end: usize) -> Result<f64, ForecastError> {
        let w = self.config.window;
        if end < w || end > series.len() {
            return Err(ForecastError::Data(format!("need {w} hours before index {end}")));
        }
        let seq = self.config.features.window(series, end - w, end, &self.scaler);
        Ok(self.scaler.unscale(self.predict_scaled(&seq)?))
    }

    /// One-step-ahead predictions for every hour from `window` on.
    pub fn predict_series(&self, series: &LoadSeries) -> Result<Vec<f64>, ForecastError> {
        (self.config.window..series.len()).map(|end| self.predict_next(series, end)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ForecastError> {
        let m: BlstmModel = serde_json::from_str(text).map_err(|e| ForecastError::Checkpoint(e.to_string()))?;
        if m.version != CHECKPOINT_VERSION {
            return Err(ForecastError::Checkpoint(format!("unsupported version {}", m.version)));
        }
        m.config.validate()?;
        m.params.validate(&m.config)?;
        Ok(m)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_batch(config: &ModelConfig, n: usize, rng: &mut impl Rng) -> Vec<Sample> {
        (0..n)
            .map(|_| Sample {
                inputs: (0..config.window)
                    .map(|_| (0..config.features.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                target: rng.gen_range(-1.0..1.0),
            })
            .collect()
    }

    #[test]
    fn zero_weights_predict_bias() {
        let cfg = ModelConfig { hidden: 4, ..Default::default() };
        let mut p = ParamSet::random(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).zeros_like();
        p.head.bias = 0.375;
        let seq = random_batch(&cfg, 1, &mut ChaCha8Rng::seed_from_u64(2)).remove(0).inputs;
        assert_eq!(blstm_forward(&seq, &p).unwrap(), 0.375);
    }

    #[test]
    fn zero_backward_projection_equals_forward_lstm() {
        let bi = ModelConfig { hidden: 5, depth: 1, ..Default::default() };
        let uni = ModelConfig { bidirectional: false, ..bi.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::random(&bi, &mut rng);
        p.head.w_bwd.fill(0.0);
        let q = ParamSet {
            layers: vec![Layer { forward: p.layers[0].forward.clone(), backward: None }],
            head: Head { w_fwd: p.head.w_fwd.clone(), w_bwd: Vec::new(), bias: p.head.bias },
        };
        q.validate(&uni).unwrap();
        let seq = random_batch(&bi, 1, &mut rng).remove(0).inputs;
        assert_eq!(blstm_forward(&seq, &p).unwrap(), blstm_forward(&seq, &q).unwrap());
    }

    #[test]
    fn swapping_directions_reverses_outputs() {
        let cfg = ModelConfig { hidden: 6, depth: 1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ParamSet::random(&cfg, &mut rng);
        let layer = &p.layers[0];
        let swapped = ParamSet {
            layers: vec![Layer { forward: layer.backward.clone().unwrap(), backward: Some(layer.forward.clone()) }],
            head: Head { w_fwd: p.head.w_bwd.clone(), w_bwd: p.head.w_fwd.clone(), bias: p.head.bias },
        };
        let seq = random_batch(&cfg, 1, &mut rng).remove(0).inputs;
        let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
        let a = step_outputs(&seq, &p).unwrap();
        let mut b = step_outputs(&rev, &swapped).unwrap();
        b.reverse();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let cfg = ModelConfig { hidden: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ParamSet::random(&cfg, &mut rng);
        let mut batch = random_batch(&cfg, 4, &mut rng);
        for s in &mut batch {
            s.target = blstm_forward(&s.inputs, &p).unwrap();
        }
        let g = gradients(&p, &batch).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let cfg = ModelConfig { hidden: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = ParamSet::random(&cfg, &mut rng);
        let batch = random_batch(&cfg, 3, &mut rng);
        let doubled: Vec<Sample> = batch.iter().chain(&batch).cloned().collect();
        let a = gradients(&p, &batch).unwrap().flatten();
        let b = gradients(&p, &doubled).unwrap().flatten();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn non_finite_weights_are_named() {
        let cfg = ModelConfig { hidden: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = ParamSet::random(&cfg, &mut rng);
        p.head.bias = f64::NAN;
        let batch = random_batch(&cfg, 1, &mut rng);
        assert!(matches!(gradients(&p, &batch), Err(ForecastError::NonFinite { .. })));
    }

    #[test]
    fn wrong_window_rejected() {
        let cfg = ModelConfig { hidden: 3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = BlstmModel::new(cfg.clone(), MinMaxScaler { min: 0.0, max: 1.0 }, ParamSet::random(&cfg, &mut rng)).unwrap();
        let seq = random_batch(&cfg, 1, &mut rng).remove(0).inputs;
        assert!(m.predict_scaled(&seq[1..]).is_err());
        let back = BlstmModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
