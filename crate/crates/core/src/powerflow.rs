//! Forward-backward sweep power flow for radial ac feeders.
//!
//! Injections are in kW / kvar (positive = generation). Internally everything
//! runs in per-unit on `network.base_mva`.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{BusId, Network, Subgrid};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

/// Below this magnitude the sweep is treated as voltage collapse.
const COLLAPSE_VOLTAGE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("network structure: {0}")]
    Structure(String),
    #[error("dimension mismatch: expected {expected} ac buses, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite injection at bus {0}")]
    NonFinite(BusId),
}

/// Parent/child ordering of the ac tree, rooted at the slack bus.
#[derive(Debug, Clone)]
pub struct RadialTopology {
    pub bus_ids: Vec<BusId>,
    index: HashMap<BusId, usize>,
    /// Buses in breadth-first order from the slack (slack first).
    order: Vec<usize>,
    /// For each non-slack bus: (parent index, line index, series impedance pu).
    upstream: Vec<Option<(usize, usize, Complex64)>>,
}

impl RadialTopology {
    pub fn new(network: &Network) -> Result<Self, PowerFlowError> {
        let bus_ids: Vec<BusId> = network.ac_buses().map(|b| b.id).collect();
        let index: HashMap<BusId, usize> = bus_ids.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let n = bus_ids.len();
        if network.lines.len() + 1 != n {
            return Err(PowerFlowError::Structure(format!("{} ac buses but {} lines", n, network.lines.len())));
        }
        let slack = *index
            .get(&network.slack_bus)
            .ok_or_else(|| PowerFlowError::Structure("slack bus is not an ac bus".into()))?;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (li, l) in network.lines.iter().enumerate() {
            let (a, b) = match (index.get(&l.from_bus), index.get(&l.to_bus)) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Err(PowerFlowError::Structure(format!("line {li} touches a non-ac bus"))),
            };
            adj[a].push((b, li));
            adj[b].push((a, li));
        }
        let mut upstream = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        seen[slack] = true;
        order.push(slack);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, li) in &adj[u] {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                let l = &network.lines[li];
                upstream[v] = Some((u, li, Complex64::new(l.resistance, l.reactance)));
                order.push(v);
            }
        }
        if order.len() != n {
            return Err(PowerFlowError::Structure("ac network is not a connected tree".into()));
        }
        Ok(Self { bus_ids, index, order, upstream })
    }

    pub fn len(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bus_ids.is_empty()
    }

    pub fn index_of(&self, bus: BusId) -> Option<usize> {
        self.index.get(&bus).copied()
    }
}

/// Net injections per ac bus, aligned with `RadialTopology::bus_ids`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusInjections {
    pub bus_ids: Vec<BusId>,
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

impl BusInjections {
    pub fn zeros(network: &Network) -> Self {
        let bus_ids: Vec<BusId> = network.ac_buses().map(|b| b.id).collect();
        let n = bus_ids.len();
        Self { bus_ids, p_kw: vec![0.0; n], q_kvar: vec![0.0; n] }
    }

    /// Adds to the injection at `bus`; returns false for a non-ac bus.
    pub fn add(&mut self, bus: BusId, p_kw: f64, q_kvar: f64) -> bool {
        match self.bus_ids.iter().position(|&b| b == bus) {
            Some(i) => {
                self.p_kw[i] += p_kw;
                self.q_kvar[i] += q_kvar;
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFlowResult {
    pub bus_ids: Vec<BusId>,
    /// per-unit, aligned with `bus_ids`
    pub v_mag: Vec<f64>,
    /// radians
    pub v_ang: Vec<f64>,
    /// Sending-end active flow (kW) per network line, positive from `from_bus` to `to_bus`.
    pub line_flow: Vec<f64>,
    /// Series current magnitude (pu) per network line.
    pub line_current: Vec<f64>,
    /// kW
    pub total_loss: f64,
    /// Power delivered by the slack bus into the network (kW, kvar), net of the slack bus's own injection.
    pub slack_p_kw: f64,
    pub slack_q_kvar: f64,
    /// Injections the flow was solved for.
    pub injections: BusInjections,
    pub converged: bool,
    pub iterations: usize,
}

impl PowerFlowResult {
    pub fn max_voltage_deviation(&self) -> f64 {
        self.v_mag.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_voltage(&self) -> f64 {
        self.v_mag.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Forward-backward sweep. The slack bus is held at 1.0∠0 pu; its entry in
/// `injections` is local generation/load that the slack must net against.
pub fn solve_radial(
    network: &Network,
    injections: &BusInjections,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PowerFlowResult, PowerFlowError> {
    let topo = RadialTopology::new(network)?;
    solve_with_topology(network, &topo, injections, tolerance, max_iterations)
}

pub fn solve_with_topology(
    network: &Network,
    topo: &RadialTopology,
    injections: &BusInjections,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PowerFlowResult, PowerFlowError> {
    let n = topo.len();
    if injections.p_kw.len() != n || injections.q_kvar.len() != n || injections.bus_ids != topo.bus_ids {
        return Err(PowerFlowError::Dimension { expected: n, got: injections.p_kw.len() });
    }
    let base_kva = network.base_mva * 1000.0;
    let mut s = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let (p, q) = (injections.p_kw[i], injections.q_kvar[i]);
        if !p.is_finite() || !q.is_finite() {
            return Err(PowerFlowError::NonFinite(topo.bus_ids[i]));
        }
        s[i] = Complex64::new(p, q) / base_kva;
    }
    let slack = topo.order[0];

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut branch = vec![Complex64::new(0.0, 0.0); n];
    let mut converged = false;
    let mut collapsed = false;
    let mut iterations = 0;
    for it in 1..=max_iterations.max(1) {
        iterations = it;
        // backward: branch current into each bus from its parent
        for &b in topo.order.iter().rev() {
            branch[b] = -(s[b] / v[b]).conj();
        }
        for &b in topo.order.iter().rev() {
            if let Some((parent, _, _)) = topo.upstream[b] {
                let ib = branch[b];
                branch[parent] += ib;
            }
        }
        // forward: voltage drops from the slack outwards
        let mut max_dv: f64 = 0.0;
        for &b in topo.order.iter().skip(1) {
            let (parent, _, z) = topo.upstream[b].expect("non-slack bus has a parent");
            let nv = v[parent] - z * branch[b];
            max_dv = max_dv.max((nv - v[b]).norm());
            v[b] = nv;
        }
        if v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite() || x.norm() < COLLAPSE_VOLTAGE) {
            collapsed = true;
            break;
        }
        if max_dv <= tolerance {
            converged = true;
            break;
        }
    }
    // currents consistent with the final voltages
    for &b in topo.order.iter().rev() {
        branch[b] = -(s[b] / v[b]).conj();
    }
    for &b in topo.order.iter().rev() {
        if let Some((parent, _, _)) = topo.upstream[b] {
            let ib = branch[b];
            branch[parent] += ib;
        }
    }

    let mut line_flow = vec![0.0; network.lines.len()];
    let mut line_current = vec![0.0; network.lines.len()];
    let mut loss = 0.0;
    for b in 0..n {
        if let Some((parent, li, z)) = topo.upstream[b] {
            let i = branch[b];
            let sending = v[parent] * i.conj() * base_kva;
            let into_parent_side = network.lines[li].from_bus == topo.bus_ids[parent];
            line_flow[li] = if into_parent_side { sending.re } else { (v[b] * (-i).conj() * base_kva).re };
            line_current[li] = i.norm();
            loss += i.norm_sqr() * z.re * base_kva;
        }
    }
    let slack_out = v[slack] * branch[slack].conj() * base_kva;
    if collapsed {
        converged = false;
    }
    Ok(PowerFlowResult {
        bus_ids: topo.bus_ids.clone(),
        v_mag: v.iter().map(|x| x.norm()).collect(),
        v_ang: v.iter().map(|x| x.arg()).collect(),
        line_flow,
        line_current,
        total_loss: loss,
        slack_p_kw: slack_out.re,
        slack_q_kvar: slack_out.im,
        injections: injections.clone(),
        converged,
        iterations,
    })
}

/// Bus admittance matrix in polar form, ac buses only.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceView {
    pub bus_ids: Vec<BusId>,
    pub y_mag: Vec<Vec<f64>>,
    /// arg(Y) in radians
    pub y_ang: Vec<Vec<f64>>,
}

impl AdmittanceView {
    pub fn new(network: &Network) -> Self {
        let bus_ids: Vec<BusId> = network.ac_buses().map(|b| b.id).collect();
        let n = bus_ids.len();
        let idx = |id: BusId| bus_ids.iter().position(|&b| b == id);
        let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for l in &network.lines {
            if let (Some(a), Some(b)) = (idx(l.from_bus), idx(l.to_bus)) {
                let ys = Complex64::new(1.0, 0.0) / Complex64::new(l.resistance, l.reactance);
                y[a][a] += ys;
                y[b][b] += ys;
                y[a][b] -= ys;
                y[b][a] -= ys;
            }
        }
        Self {
            y_mag: y.iter().map(|r| r.iter().map(|c| c.norm()).collect()).collect(),
            y_ang: y.iter().map(|r| r.iter().map(|c| c.arg()).collect()).collect(),
            bus_ids,
        }
    }
}

/// Per-bus mismatch (pu) between scheduled injections and the nodal sums
/// P_j = Σ V_j V_n Y_jn cos(δ_j − δ_n − θ_jn), Q_j = Σ V_j V_n Y_jn sin(δ_j − δ_n − θ_jn).
/// Each entry is max(|ΔP|, |ΔQ|); the slack bus is free and reports 0.
pub fn injection_residual(network: &Network, result: &PowerFlowResult) -> Result<Vec<f64>, PowerFlowError> {
    let y = AdmittanceView::new(network);
    let n = y.bus_ids.len();
    if result.v_mag.len() != n || result.v_ang.len() != n || result.bus_ids != y.bus_ids {
        return Err(PowerFlowError::Dimension { expected: n, got: result.v_mag.len() });
    }
    let base_kva = network.base_mva * 1000.0;
    let mut out = vec![0.0; n];
    for j in 0..n {
        if y.bus_ids[j] == network.slack_bus {
            continue;
        }
        let (mut p, mut q) = (0.0, 0.0);
        for k in 0..n {
            if y.y_mag[j][k] == 0.0 {
                continue;
            }
            let a = result.v_ang[j] - result.v_ang[k] - y.y_ang[j][k];
            let m = result.v_mag[j] * result.v_mag[k] * y.y_mag[j][k];
            p += m * a.cos();
            q += m * a.sin();
        }
        let dp = result.injections.p_kw[j] / base_kva - p;
        let dq = result.injections.q_kvar[j] / base_kva - q;
        out[j] = dp.abs().max(dq.abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitViolation {
    Voltage { bus: BusId, value: f64, limit: f64, magnitude: f64 },
    Feeder { from_bus: BusId, to_bus: BusId, flow_kw: f64, capacity_kw: f64, magnitude: f64 },
}

impl LimitViolation {
    pub fn magnitude(&self) -> f64 {
        match self {
            LimitViolation::Voltage { magnitude, .. } | LimitViolation::Feeder { magnitude, .. } => *magnitude,
        }
    }
}

/// Feeder-capacity and bus-voltage limit breaches.
pub fn check_limits(network: &Network, result: &PowerFlowResult) -> Vec<LimitViolation> {
    let mut out = Vec::new();
    for (i, &id) in result.bus_ids.iter().enumerate() {
        let Some(bus) = network.bus(id) else { continue };
        if bus.subgrid != Subgrid::Ac {
            continue;
        }
        let v = result.v_mag[i];
        if v < bus.v_min {
            out.push(LimitViolation::Voltage { bus: id, value: v, limit: bus.v_min, magnitude: bus.v_min - v });
        } else if v > bus.v_max {
            out.push(LimitViolation::Voltage { bus: id, value: v, limit: bus.v_max, magnitude: v - bus.v_max });
        }
    }
    for (l, &flow) in network.lines.iter().zip(&result.line_flow) {
        if flow.abs() > l.capacity {
            out.push(LimitViolation::Feeder {
                from_bus: l.from_bus,
                to_bus: l.to_bus,
                flow_kw: flow,
                capacity_kw: l.capacity,
                magnitude: flow.abs() - l.capacity,
            });
        }
    }
    out
}

/// Injections for every ac bus from the hour's demand (negative) only.
pub fn load_injections(
    network: &Network,
    hour: usize,
    scenario: &crate::grid::Scenario,
) -> Result<BusInjections, crate::grid::GridError> {
    let mut inj = BusInjections::zeros(network);
    for b in network.ac_buses() {
        let (p, q) = crate::grid::bus_load(network, b, hour, scenario)?;
        inj.add(b.id, -p, -q);
    }
    Ok(inj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Line, Scenario};

    pub(crate) fn two_bus(r: f64, x: f64) -> Network {
        let bus = |id| Bus { id, subgrid: Subgrid::Ac, v_min: 0.9, v_max: 1.1, peak_active_load: 0.0, peak_reactive_load: 0.0 };
        Network {
            name: "two-bus".into(),
            base_mva: 1.0,
            base_kv_ac: 12.66,
            base_kv_dc: 1.0,
            slack_bus: 1,
            buses: vec![bus(1), bus(2)],
            lines: vec![Line { from_bus: 1, to_bus: 2, resistance: r, reactance: x, capacity: 1000.0 }],
            dg_units: vec![],
            converter: None,
        }
    }

    #[test]
    fn flat_profile() {
        let net = Network::ieee33_hybrid();
        let r = solve_radial(&net, &BusInjections::zeros(&net), DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.v_mag.iter().all(|&v| v == 1.0));
        assert_eq!(r.total_loss, 0.0);
        let res = injection_residual(&net, &r).unwrap();
        assert!(res.iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn two_bus_matches_quadratic() {
        let (rr, xx, p, q) = (0.05, 0.05, 0.5, 0.0);
        let net = two_bus(rr, xx);
        let mut inj = BusInjections::zeros(&net);
        inj.add(2, -p * 1000.0, -q * 1000.0);
        let r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(r.converged);
        // |V2|^4 + (2(PR+QX) - 1)|V2|^2 + (P^2+Q^2)(R^2+X^2) = 0, high-voltage root
        let b = 2.0 * (p * rr + q * xx) - 1.0;
        let c = (p * p + q * q) * (rr * rr + xx * xx);
        let v2 = ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt();
        assert!((r.v_mag[1] - v2).abs() < 1e-9, "{} vs {v2}", r.v_mag[1]);
        let loss = (p * p + q * q) / (v2 * v2) * rr * 1000.0;
        assert!((r.total_loss - loss).abs() < 1e-6);
        let res = injection_residual(&net, &r).unwrap();
        assert!(res[1] <= DEFAULT_TOLERANCE);
    }

    #[test]
    fn perturbed_voltage_breaks_balance() {
        let net = two_bus(0.05, 0.05);
        let mut inj = BusInjections::zeros(&net);
        inj.add(2, -500.0, 0.0);
        let mut r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        r.v_mag[1] += 0.01;
        assert!(injection_residual(&net, &r).unwrap()[1] > DEFAULT_TOLERANCE);
    }

    #[test]
    fn collapse_is_reported_not_panicked() {
        let net = two_bus(0.5, 0.5);
        let mut inj = BusInjections::zeros(&net);
        inj.add(2, -5000.0, -5000.0);
        let r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn base_case_literature_values() {
        let net = Network::ieee33_hybrid();
        let s = Scenario::reference();
        let inj = load_injections(&net, 11, &s).unwrap();
        let r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(r.converged);
        assert!((r.total_loss - 202.677).abs() < 0.01, "{}", r.total_loss);
        let i18 = r.bus_ids.iter().position(|&b| b == 18).unwrap();
        assert!((r.v_mag[i18] - 0.91309).abs() < 1e-4);
        let gen = r.slack_p_kw;
        assert!((gen - 3715.0 - r.total_loss).abs() < 1e-4);
    }

    #[test]
    fn limit_examples() {
        let mut net = two_bus(0.05, 0.05);
        let mut inj = BusInjections::zeros(&net);
        inj.add(2, -50.0, 0.0);
        let r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(check_limits(&net, &r).is_empty());

        let mut low = r.clone();
        low.v_mag[1] = 0.88;
        let v = check_limits(&net, &low);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], LimitViolation::Voltage { bus: 2, .. }));
        assert!((v[0].magnitude() - 0.02).abs() < 1e-12);

        net.lines[0].capacity = 100.0;
        let mut hot = r;
        hot.line_flow[0] = 120.0;
        let v = check_limits(&net, &hot);
        assert_eq!(v.len(), 1);
        assert!((v[0].magnitude() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_line_orientation_flips_flow_sign() {
        let mut net = two_bus(0.05, 0.05);
        let mut inj = BusInjections::zeros(&net);
        inj.add(2, -300.0, -100.0);
        let a = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        net.lines[0] = Line { from_bus: 2, to_bus: 1, ..net.lines[0].clone() };
        let b = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(a.line_flow[0] > 0.0);
        assert!(b.line_flow[0] < 0.0);
        assert!((a.line_flow[0] + b.line_flow[0] - a.total_loss).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random radial feeder: bus k+1 hangs off a random earlier bus.
        fn feeder() -> impl Strategy<Value = (Network, BusInjections)> {
            (3usize..12)
                .prop_flat_map(|n| {
                    (
                        Just(n),
                        proptest::collection::vec(0usize..1000, n - 1),
                        proptest::collection::vec((0.001..0.03f64, 0.001..0.03f64), n - 1),
                        proptest::collection::vec((0.0..300.0f64, 0.0..150.0f64), n),
                    )
                })
                .prop_map(|(n, parents, zs, loads)| {
                    let bus = |id| Bus { id, subgrid: Subgrid::Ac, v_min: 0.9, v_max: 1.1, peak_active_load: 0.0, peak_reactive_load: 0.0 };
                    let buses = (1..=n as u32).map(bus).collect();
                    let lines = (0..n - 1)
                        .map(|k| Line {
                            from_bus: (parents[k] % (k + 1)) as u32 + 1,
                            to_bus: k as u32 + 2,
                            resistance: zs[k].0,
                            reactance: zs[k].1,
                            capacity: 1e6,
                        })
                        .collect();
                    let net = Network {
                        name: String::new(),
                        base_mva: 1.0,
                        base_kv_ac: 12.66,
                        base_kv_dc: 1.0,
                        slack_bus: 1,
                        buses,
                        lines,
                        dg_units: vec![],
                        converter: None,
                    };
                    let mut inj = BusInjections::zeros(&net);
                    for (i, (p, q)) in loads.into_iter().enumerate().skip(1) {
                        inj.p_kw[i] = -p;
                        inj.q_kvar[i] = -q;
                    }
                    (net, inj)
                })
        }

        proptest! {
            #[test]
            fn conservation_and_residual((net, inj) in feeder()) {
                let r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
                prop_assert!(r.converged);
                let res = injection_residual(&net, &r).unwrap();
                prop_assert!(res.iter().cloned().fold(0.0, f64::max) <= DEFAULT_TOLERANCE);
                let tight = solve_radial(&net, &inj, 1e-13, DEFAULT_MAX_ITERATIONS).unwrap();
                let load: f64 = -inj.p_kw.iter().sum::<f64>();
                prop_assert!((tight.slack_p_kw - load - tight.total_loss).abs() < 1e-6);
                prop_assert!(r.total_loss >= 0.0);
                prop_assert!(res.iter().cloned().fold(0.0, f64::max) <= DEFAULT_TOLERANCE);
            }

            #[test]
            fn halving_load_never_increases_loss((net, inj) in feeder()) {
                let full = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
                let mut half = inj.clone();
                half.p_kw.iter_mut().for_each(|p| *p *= 0.5);
                half.q_kvar.iter_mut().for_each(|q| *q *= 0.5);
                let h = solve_radial(&net, &half, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
                prop_assert!(h.total_loss <= full.total_loss + 1e-12);
            }

            #[test]
            fn zero_loss_iff_zero_current((net, inj) in feeder(), zero in any::<bool>()) {
                let inj = if zero { BusInjections::zeros(&net) } else { inj };
                let r = solve_radial(&net, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap();
                let all_zero = r.line_current.iter().all(|&i| i == 0.0);
                prop_assert_eq!(r.total_loss == 0.0, all_zero);
            }
        }
    }
}
