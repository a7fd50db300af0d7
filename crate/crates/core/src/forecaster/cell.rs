//! Single LSTM cell: forward step with cached activations and its exact
//! backward step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForecastError, Matrix};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate blocks are stacked in the order input, forget, candidate, output:
/// rows `0..H` belong to the input gate, `H..2H` to the forget gate and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    /// 4H x input
    pub w_x: Matrix,
    /// 4H x H
    pub w_h: Matrix,
    /// 4H
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { w_x: Matrix::zeros(4 * hidden, input), w_h: Matrix::zeros(4 * hidden, hidden), b: vec![0.0; 4 * hidden] }
    }

    /// Uniform in ±1/√fan_in with fan_in = input + hidden.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        Self {
            w_x: Matrix::uniform(4 * hidden, input, bound, rng),
            w_h: Matrix::uniform(4 * hidden, hidden, bound, rng),
            b: (0..4 * hidden).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols
    }

    pub fn input(&self) -> usize {
        self.w_x.cols
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let h = self.hidden();
        if self.w_h.rows != 4 * h || self.w_x.rows != 4 * h || self.b.len() != 4 * h {
            return Err(ForecastError::Dimension(format!("cell blocks must have {} rows", 4 * h)));
        }
        Ok(())
    }

    /// Row of gate `g` for hidden unit `k`.
    pub fn row(&self, g: Gate, k: usize) -> usize {
        g as usize * self.hidden() + k
    }

    pub(crate) fn segments(&self) -> [&[f64]; 3] {
        [&self.w_x.data, &self.w_h.data, &self.b]
    }

    pub(crate) fn segments_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w_x.data, &mut self.w_h.data, &mut self.b]
    }
}

/// Activations of one step kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

pub(crate) fn step(p: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let hd = p.hidden();
    let mut z = p.b.clone();
    p.w_x.matvec_add(x, &mut z);
    p.w_h.matvec_add(h_prev, &mut z);
    let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    StepCache { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), i, f, g, o, tanh_c, h, c }
}

/// Backward through one step. `dh` and `dc` are the loss gradients w.r.t.
/// this step's outputs; returns gradients w.r.t. x, h_prev and c_prev and
/// accumulates parameter gradients into `grad`.
pub(crate) fn step_backward(
    p: &LstmCellParams,
    s: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grad: &mut LstmCellParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = p.hidden();
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let d_o = dh[k] * s.tanh_c[k];
        let dck = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
        let di = dck * s.g[k];
        let dg = dck * s.i[k];
        let df = dck * s.c_prev[k];
        dc_prev[k] = dck * s.f[k];
        dz[k] = di * s.i[k] * (1.0 - s.i[k]);
        dz[hd + k] = df * s.f[k] * (1.0 - s.f[k]);
        dz[2 * hd + k] = dg * (1.0 - s.g[k] * s.g[k]);
        dz[3 * hd + k] = d_o * s.o[k] * (1.0 - s.o[k]);
    }
    grad.w_x.add_outer(&dz, &s.x);
    grad.w_h.add_outer(&dz, &s.h_prev);
    for (b, d) in grad.b.iter_mut().zip(&dz) {
        *b += d;
    }
    let mut dx = vec![0.0; p.input()];
    p.w_x.t_matvec_add(&dz, &mut dx);
    let mut dh_prev = vec![0.0; hd];
    p.w_h.t_matvec_add(&dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

/// One forward step: returns `(h_t, c_t)`.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmCellParams,
) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    params.validate()?;
    let hd = params.hidden();
    if x.len() != params.input() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(ForecastError::Dimension(format!(
            "cell expects input {} and state {hd}, got {}, {}, {}",
            params.input(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let s = step(params, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell() {
        let p = LstmCellParams::zeros(2, 3);
        let s = step(&p, &[0.3, -1.0], &[0.0; 3], &[0.0; 3]);
        assert!(s.i.iter().chain(&s.f).chain(&s.o).all(|&v| v == 0.5));
        assert!(s.g.iter().chain(&s.c).chain(&s.h).all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_memory() {
        let mut p = LstmCellParams::zeros(1, 1);
        let (f, i) = (p.row(Gate::Forget, 0), p.row(Gate::Input, 0));
        p.b[f] = 40.0;
        p.b[i] = -40.0;
        let (_, c) = lstm_cell_forward(&[0.7], &[0.2], &[1.0], &p).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_hand_values() {
        let mut p = LstmCellParams::zeros(1, 1);
        p.w_x.data.fill(1.0);
        p.w_h.data.fill(1.0);
        let s = step(&p, &[1.0], &[0.0], &[0.0]);
        let r5 = |v: f64| (v * 1e5).round() / 1e5;
        assert_eq!(r5(s.i[0]), 0.73106);
        assert_eq!(r5(s.f[0]), 0.73106);
        assert_eq!(r5(s.o[0]), 0.73106);
        assert_eq!(r5(s.g[0]), 0.76159);
        assert_eq!(r5(s.c[0]), 0.55677);
        // 0.73106 * tanh(0.55677)
        assert_eq!(r5(s.h[0]), 0.36961);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = LstmCellParams::zeros(2, 3);
        assert!(lstm_cell_forward(&[0.0], &[0.0; 3], &[0.0; 3], &p).is_err());
        assert!(lstm_cell_forward(&[0.0; 2], &[0.0; 2], &[0.0; 3], &p).is_err());
    }

    proptest! {
        #[test]
        fn activation_bounds(seed in any::<u64>(), x in proptest::collection::vec(-5.0..5.0f64, 3),
                             c_prev in proptest::collection::vec(-3.0..3.0f64, 4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = LstmCellParams::random(3, 4, &mut rng);
            let h_prev: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = step(&p, &x, &h_prev, &c_prev);
            for k in 0..4 {
                for v in [s.i[k], s.f[k], s.o[k]] {
                    prop_assert!(v > 0.0 && v < 1.0);
                }
                prop_assert!(s.g[k].abs() < 1.0);
                prop_assert!(s.h[k].abs() < s.o[k] + 1e-15);
                prop_assert!(s.c[k].abs() <= c_prev[k].abs() + 1.0);
            }
        }
    }
}
