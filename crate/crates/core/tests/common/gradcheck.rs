//! Central finite-difference check of analytic gradients.

use hmg_core::forecaster::{batch_loss, gradients, ParamSet, Sample};

pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|)`, with entries whose gradients
/// are both below `floor` compared in absolute terms against `floor`.
pub fn check(params: &ParamSet, batch: &[Sample], h: f64, floor: f64) -> GradCheck {
    let analytic = gradients(params, batch).expect("gradients");
    let names: Vec<(String, usize)> = analytic.named_segments().iter().map(|(n, s)| (n.clone(), s.len())).collect();
    let flat = params.flatten();
    let grad = analytic.flatten();
    let mut probe = params.clone();
    let mut out = GradCheck { max_relative_error: 0.0, worst_parameter: String::new(), checked: 0 };
    let mut k = 0;
    for (name, len) in names {
        for j in 0..len {
            let mut x = flat.clone();
            x[k] = flat[k] + h;
            probe.assign_flat(&x).unwrap();
            let up = batch_loss(&probe, batch).unwrap();
            x[k] = flat[k] - h;
            probe.assign_flat(&x).unwrap();
            let down = batch_loss(&probe, batch).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let a = grad[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > out.max_relative_error {
                out.max_relative_error = rel;
                out.worst_parameter = format!("{name}[{j}]");
            }
            out.checked += 1;
            k += 1;
        }
    }
    out
}
