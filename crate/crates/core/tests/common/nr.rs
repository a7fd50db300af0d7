//! Polar Newton-Raphson power flow over a dense bus admittance matrix,
//! independent of the sweep solver.

use hmg_core::grid::Network;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub struct NrSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub loss_kw: f64,
}

fn ybus(net: &Network) -> (Vec<u32>, DMatrix<Complex64>) {
    let ids: Vec<u32> = net.buses.iter().filter(|b| b.subgrid == hmg_core::grid::Subgrid::Ac).map(|b| b.id).collect();
    let n = ids.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for l in &net.lines {
        let a = ids.iter().position(|&i| i == l.from_bus).unwrap();
        let b = ids.iter().position(|&i| i == l.to_bus).unwrap();
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.resistance, l.reactance);
        y[(a, a)] += ys;
        y[(b, b)] += ys;
        y[(a, b)] -= ys;
        y[(b, a)] -= ys;
    }
    (ids, y)
}

/// Polar Newton-Raphson with the slack at index of `net.slack_bus`.
pub fn newton_raphson(net: &Network, p_kw: &[f64], q_kvar: &[f64]) -> NrSolution {
    let (ids, y) = ybus(net);
    let n = ids.len();
    let slack = ids.iter().position(|&i| i == net.slack_bus).unwrap();
    let base = net.base_mva * 1000.0;
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    let calc = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        (0..n)
            .map(|i| {
                let mut inj = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    inj += y[(i, k)] * v[k];
                }
                v[i] * inj.conj()
            })
            .collect()
    };
    for _ in 0..50 {
        let s = calc(&vm, &va);
        let mut f = DVector::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            f[r] = p_kw[i] / base - s[i].re;
            f[m + r] = q_kvar[i] / base - s[i].im;
        }
        if f.amax() < 1e-13 {
            break;
        }
        // Jacobian of calculated injections w.r.t. (angles, magnitudes)
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let g = y[(i, k)].re;
                let b = y[(i, k)].im;
                if i != k {
                    let th = va[i] - va[k];
                    let (st, ct) = th.sin_cos();
                    jac[(r, c)] = vm[i] * vm[k] * (g * st - b * ct);
                    jac[(r, m + c)] = vm[i] * (g * ct + b * st);
                    jac[(m + r, c)] = -vm[i] * vm[k] * (g * ct + b * st);
                    jac[(m + r, m + c)] = vm[i] * (g * st - b * ct);
                } else {
                    let (pi, qi) = (s[i].re, s[i].im);
                    jac[(r, c)] = -qi - b * vm[i] * vm[i];
                    jac[(r, m + c)] = pi / vm[i] + g * vm[i];
                    jac[(m + r, c)] = pi - g * vm[i] * vm[i];
                    jac[(m + r, m + c)] = qi / vm[i] - b * vm[i];
                }
            }
        }
        let dx = jac.lu().solve(&f).expect("nonsingular Jacobian");
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[m + r];
        }
    }
    let s = calc(&vm, &va);
    let loss_kw = s.iter().map(|x| x.re).sum::<f64>() * base;
    NrSolution { v_mag: vm, v_ang: va, loss_kw }
}

