//! Day-ahead unit commitment and dispatch of the isolated microgrid.
//!
//! A [`Schedule`] covers every DG unit in network order. Renewable rows are
//! fixed at their available output; dispatchable rows carry commitment and
//! output. The converter setpoint is positive when power flows from the ac
//! to the dc sub-grid.

mod decode;
pub mod dragonfly;
mod optimize;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{bus_load, res_output, DgUnit, GridError, Network, Scenario, Subgrid};
use crate::powerflow::{
    check_limits, solve_with_topology, BusInjections, LimitViolation, PowerFlowError, PowerFlowResult,
    RadialTopology, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};

pub use decode::{Problem, UnitRole};
pub use dragonfly::{dragonfly_step, Leaders, SearchSpace, StepWeights, Swarm};
pub use optimize::{optimize, OptimizeResult, OptimizerConfig, PenaltyWeights};

/// Balance mismatches below this (kW) are numerical noise.
pub const BALANCE_TOLERANCE_KW: f64 = 1e-3;
/// Limit overshoots at or below this are rounding.
pub const LIMIT_TOLERANCE: f64 = 1e-6;
/// Magnitude reported when the hour's power flow fails to converge.
pub const DIVERGENCE_MAGNITUDE: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("schedule shape: {0}")]
    Dimension(String),
    #[error("unit {unit} committed with negative output {p_kw} kW at hour {hour}")]
    NegativeOutput { unit: u32, hour: usize, p_kw: f64 },
    #[error("optimizer config: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// kW, `[hour][unit]`
    pub p_g: Vec<Vec<f64>>,
    /// `[hour][unit]`
    pub u: Vec<Vec<bool>>,
    /// kW per hour, positive ac to dc
    pub p_conv: Vec<f64>,
}

impl Schedule {
    pub fn zeros(hours: usize, units: usize) -> Self {
        Self { p_g: vec![vec![0.0; units]; hours], u: vec![vec![false; units]; hours], p_conv: vec![0.0; hours] }
    }

    pub fn hours(&self) -> usize {
        self.p_g.len()
    }

    pub fn units(&self) -> usize {
        self.p_g.first().map_or(0, Vec::len)
    }

    fn check_shape(&self, hours: usize, units: usize) -> Result<(), SchedulerError> {
        let ok = self.p_g.len() == hours
            && self.u.len() == hours
            && self.p_conv.len() == hours
            && self.p_g.iter().all(|r| r.len() == units)
            && self.u.iter().all(|r| r.len() == units);
        if ok {
            Ok(())
        } else {
            Err(SchedulerError::Dimension(format!("expected {hours} hours x {units} units")))
        }
    }

    /// Reads the wide dispatch layout `hour,<unit names...>,p_conv_kw`
    /// (kW). A unit is committed when its output is non-zero.
    pub fn from_dispatch_csv(text: &str, network: &Network) -> Result<Self, SchedulerError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| SchedulerError::Dimension(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let unit_cols: Vec<usize> = network
            .dg_units
            .iter()
            .map(|u| col(&u.name).ok_or_else(|| SchedulerError::Dimension(format!("missing column {}", u.name))))
            .collect::<Result<_, _>>()?;
        let conv_col = col("p_conv_kw").ok_or_else(|| SchedulerError::Dimension("missing column p_conv_kw".into()))?;
        let mut s = Schedule::zeros(0, network.dg_units.len());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SchedulerError::Dimension(format!("row {}: {e}", row + 1)))?;
            let num = |c: usize| -> Result<f64, SchedulerError> {
                rec.get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| SchedulerError::Dimension(format!("row {}: column {} is not numeric", row + 1, c + 1)))
            };
            let p: Vec<f64> = unit_cols.iter().map(|&c| num(c)).collect::<Result<_, _>>()?;
            s.u.push(p.iter().map(|&x| x != 0.0).collect());
            s.p_g.push(p);
            s.p_conv.push(num(conv_col)?);
        }
        Ok(s)
    }
}

/// Operating cost: energy, start-up and shut-down charges.
pub fn operating_cost(schedule: &Schedule, units: &[DgUnit], initial_commitment: &[bool]) -> Result<f64, SchedulerError> {
    schedule.check_shape(schedule.hours(), units.len())?;
    if initial_commitment.len() != units.len() {
        return Err(SchedulerError::Dimension("initial commitment length".into()));
    }
    let mut total = 0.0;
    for t in 0..schedule.hours() {
        total += hour_cost(schedule, units, initial_commitment, t)?;
    }
    Ok(total)
}

fn unit_hour_cost(schedule: &Schedule, unit: &DgUnit, i: usize, prev_on: bool, t: usize) -> Result<f64, SchedulerError> {
    let on = schedule.u[t][i];
    let p = schedule.p_g[t][i];
    if on && p < 0.0 {
        return Err(SchedulerError::NegativeOutput { unit: unit.id, hour: t, p_kw: p });
    }
    let mut c = if on { p * unit.energy_cost } else { 0.0 };
    if on && !prev_on {
        c += unit.startup_cost;
    }
    if prev_on && !on {
        c += unit.shutdown_cost;
    }
    Ok(c)
}

fn hour_cost(schedule: &Schedule, units: &[DgUnit], initial: &[bool], t: usize) -> Result<f64, SchedulerError> {
    let mut c = 0.0;
    for (i, unit) in units.iter().enumerate() {
        let prev = if t == 0 { initial[i] } else { schedule.u[t - 1][i] };
        c += unit_hour_cost(schedule, unit, i, prev, t)?;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintClass {
    DcBalance,
    Capacity,
    Reserve,
    Feeder,
    Voltage,
    Ramp,
    /// Power the slack bus must supply beyond the scheduled output there.
    AcBalance,
}

impl ConstraintClass {
    pub const ALL: [ConstraintClass; 7] = [
        ConstraintClass::DcBalance,
        ConstraintClass::Capacity,
        ConstraintClass::Reserve,
        ConstraintClass::Feeder,
        ConstraintClass::Voltage,
        ConstraintClass::Ramp,
        ConstraintClass::AcBalance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintClass::DcBalance => "dc_balance",
            ConstraintClass::Capacity => "capacity",
            ConstraintClass::Reserve => "reserve",
            ConstraintClass::Feeder => "feeder",
            ConstraintClass::Voltage => "voltage",
            ConstraintClass::Ramp => "ramp",
            ConstraintClass::AcBalance => "ac_balance",
        }
    }
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: ConstraintClass,
    /// 0-based hour index
    pub hour: usize,
    /// kW, or pu for voltage
    pub magnitude: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn of_class(&self, class: ConstraintClass) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.constraint == class)
    }

    pub fn total(&self, class: ConstraintClass) -> f64 {
        self.of_class(class).map(|v| v.magnitude).sum()
    }

    fn push(&mut self, constraint: ConstraintClass, hour: usize, magnitude: f64, detail: String) {
        if magnitude > LIMIT_TOLERANCE {
            self.violations.push(Violation { constraint, hour, magnitude, detail });
        }
    }
}

/// Fixed per-hour quantities shared by evaluation and decoding.
#[derive(Debug, Clone)]
pub(crate) struct HourData {
    /// ac loads only (negative injections)
    pub loads: BusInjections,
    pub ac_demand: f64,
    pub dc_demand: f64,
    pub reserve: f64,
    /// available output of each renewable unit, 0 for dispatchable units
    pub res: Vec<f64>,
}

pub(crate) fn hour_data(network: &Network, scenario: &Scenario, t: usize) -> Result<HourData, SchedulerError> {
    let mut loads = BusInjections::zeros(network);
    let (mut ac, mut dc) = (0.0, 0.0);
    for b in &network.buses {
        let (p, q) = bus_load(network, b, t, scenario)?;
        match b.subgrid {
            Subgrid::Ac => {
                loads.add(b.id, -p, -q);
                ac += p;
            }
            Subgrid::Dc => dc += p,
        }
    }
    let res = network
        .dg_units
        .iter()
        .map(|u| if u.dispatchable { Ok(0.0) } else { res_output(u, t, scenario) })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HourData { loads, ac_demand: ac, dc_demand: dc, reserve: scenario.reserve_requirement(t, ac + dc), res })
}

/// ac injections for one hour: loads, ac-side units and the converter.
pub(crate) fn hour_injections(network: &Network, data: &HourData, p: &[f64], u: &[bool], p_conv: f64) -> BusInjections {
    let mut inj = data.loads.clone();
    for (i, unit) in network.dg_units.iter().enumerate() {
        if u[i] && network.unit_subgrid(unit) == Subgrid::Ac {
            inj.add(unit.bus, p[i], 0.0);
        }
    }
    if let Some(c) = &network.converter {
        inj.add(c.ac_bus, -p_conv, 0.0);
    }
    inj
}

pub(crate) fn dc_generation(network: &Network, p: &[f64], u: &[bool]) -> f64 {
    network
        .dg_units
        .iter()
        .enumerate()
        .filter(|(i, unit)| u[*i] && network.unit_subgrid(unit) == Subgrid::Dc)
        .map(|(i, _)| p[i])
        .sum()
}

/// Runs the hour's power flow for a schedule.
pub fn hourly_flow(
    schedule: &Schedule,
    scenario: &Scenario,
    network: &Network,
    hour: usize,
) -> Result<PowerFlowResult, SchedulerError> {
    let topo = RadialTopology::new(network)?;
    let data = hour_data(network, scenario, hour)?;
    let inj = hour_injections(network, &data, &schedule.p_g[hour], &schedule.u[hour], schedule.p_conv[hour]);
    Ok(solve_with_topology(network, &topo, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?)
}

/// Checks every constraint class for every hour. Power-flow divergence is
/// reported as a voltage violation of [`DIVERGENCE_MAGNITUDE`].
pub fn evaluate_constraints(schedule: &Schedule, scenario: &Scenario, network: &Network) -> Result<ViolationReport, SchedulerError> {
    let topo = RadialTopology::new(network)?;
    let n_t = scenario.horizon();
    schedule.check_shape(n_t, network.dg_units.len())?;
    let mut rep = ViolationReport::default();
    for t in 0..n_t {
        let data = hour_data(network, scenario, t)?;
        evaluate_hour(schedule, network, &topo, &data, t, &mut rep)?;
    }
    Ok(rep)
}

pub(crate) fn evaluate_hour(
    schedule: &Schedule,
    network: &Network,
    topo: &RadialTopology,
    data: &HourData,
    t: usize,
    rep: &mut ViolationReport,
) -> Result<Option<PowerFlowResult>, SchedulerError> {
    use ConstraintClass::*;
    let p = &schedule.p_g[t];
    let u = &schedule.u[t];
    let p_conv = schedule.p_conv[t];

    // capacity (units and converter)
    for (i, unit) in network.dg_units.iter().enumerate() {
        let x = p[i];
        let name = &unit.name;
        if !u[i] {
            rep.push(Capacity, t, x.abs(), format!("{name} off but producing"));
            continue;
        }
        let upper = if unit.dispatchable { unit.p_max } else { data.res[i].min(unit.capacity) };
        let lower = if unit.dispatchable { unit.p_min } else { 0.0 };
        rep.push(Capacity, t, x - upper, format!("{name} above maximum"));
        rep.push(Capacity, t, lower - x, format!("{name} below minimum"));
    }
    if let Some(c) = &network.converter {
        rep.push(Capacity, t, p_conv - c.p_max, "converter above maximum".into());
        rep.push(Capacity, t, c.p_min - p_conv, "converter below minimum".into());
    }

    // dc balance, dc losses neglected
    if network.converter.is_some() || network.dc_buses().next().is_some() {
        let mismatch = dc_generation(network, p, u) + p_conv - data.dc_demand;
        if mismatch.abs() > BALANCE_TOLERANCE_KW {
            rep.push(DcBalance, t, mismatch.abs(), format!("dc mismatch {mismatch:+.3} kW"));
        }
    }

    // ramp against the previous hour, off counting as zero output
    if t > 0 {
        for (i, unit) in network.dg_units.iter().enumerate().filter(|(_, u)| u.dispatchable) {
            let prev = if schedule.u[t - 1][i] { schedule.p_g[t - 1][i] } else { 0.0 };
            let now = if u[i] { p[i] } else { 0.0 };
            let d = now - prev;
            rep.push(Ramp, t, d - unit.ramp_up, format!("{} ramps up {d:.3} kW", unit.name));
            rep.push(Ramp, t, -d - unit.ramp_down, format!("{} ramps down {:.3} kW", unit.name, -d));
        }
    }

    let inj = hour_injections(network, data, p, u, p_conv);
    let flow = solve_with_topology(network, topo, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
    if !flow.converged {
        rep.push(Voltage, t, DIVERGENCE_MAGNITUDE, "power flow did not converge".into());
        return Ok(None);
    }
    if flow.slack_p_kw.abs() > BALANCE_TOLERANCE_KW {
        rep.push(AcBalance, t, flow.slack_p_kw.abs(), format!("slack supplies {:+.3} kW beyond schedule", flow.slack_p_kw));
    }

    // spinning reserve on nameplate of committed units
    let committed: f64 = network
        .dg_units
        .iter()
        .enumerate()
        .filter(|(i, _)| u[*i])
        .map(|(_, unit)| if unit.dispatchable { unit.p_max } else { unit.capacity })
        .sum();
    let need = data.ac_demand + data.dc_demand + flow.total_loss + data.reserve;
    rep.push(Reserve, t, need - committed, format!("committed {committed:.1} kW vs required {need:.1} kW"));

    for v in check_limits(network, &flow) {
        match v {
            LimitViolation::Voltage { bus, value, magnitude, .. } => {
                rep.push(Voltage, t, magnitude, format!("bus {bus} at {value:.4} pu"))
            }
            LimitViolation::Feeder { from_bus, to_bus, flow_kw, magnitude, .. } => {
                rep.push(Feeder, t, magnitude, format!("line {from_bus}-{to_bus} carries {flow_kw:.1} kW"))
            }
        }
    }
    Ok(Some(flow))
}

/// Long CSV: one row per hour and unit.
pub const SCHEDULE_CSV_HEADER: &str = "hour,unit_id,committed,p_kw,p_conv_kw,cost_cum";

pub fn schedule_csv_rows(schedule: &Schedule, units: &[DgUnit], initial_commitment: &[bool]) -> Result<Vec<String>, SchedulerError> {
    schedule.check_shape(schedule.hours(), units.len())?;
    let mut rows = Vec::with_capacity(schedule.hours() * units.len());
    let mut cum = 0.0;
    for t in 0..schedule.hours() {
        for (i, unit) in units.iter().enumerate() {
            let prev = if t == 0 { initial_commitment[i] } else { schedule.u[t - 1][i] };
            cum += unit_hour_cost(schedule, unit, i, prev, t)?;
            rows.push(format!(
                "{},{},{},{:.3},{:.3},{:.3}",
                t + 1,
                unit.id,
                u8::from(schedule.u[t][i]),
                schedule.p_g[t][i],
                schedule.p_conv[t],
                cum
            ));
        }
    }
    Ok(rows)
}

/// Wide CSV header: `hour,<unit names...>,p_conv_kw`.
pub fn dispatch_csv_header(units: &[DgUnit]) -> String {
    let mut h = String::from("hour");
    for u in units {
        h.push(',');
        h.push_str(&u.name);
    }
    h.push_str(",p_conv_kw");
    h
}

pub fn dispatch_csv_rows(schedule: &Schedule) -> Vec<String> {
    (0..schedule.hours())
        .map(|t| {
            let mut r = format!("{}", t + 1);
            for i in 0..schedule.units() {
                let p = if schedule.u[t][i] { schedule.p_g[t][i] } else { 0.0 };
                r.push_str(&format!(",{p:.3}"));
            }
            r.push_str(&format!(",{:.3}", schedule.p_conv[t]));
            r
        })
        .collect()
}

/// Bundled dispatch table reported for the reference study.
pub const SAMPLE_DISPATCH_CSV: &str = include_str!("../../data/sample_dispatch.csv");

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::grid::UnitKind;

    pub(crate) fn unit(id: u32, cost: f64, s_on: f64, s_off: f64) -> DgUnit {
        DgUnit {
            id,
            name: format!("U{id}"),
            bus: 1,
            kind: UnitKind::MT,
            dispatchable: true,
            p_min: 0.0,
            p_max: 500.0,
            energy_cost: cost,
            startup_cost: s_on,
            shutdown_cost: s_off,
            ramp_up: 500.0,
            ramp_down: 500.0,
            capacity: 500.0,
            grid_forming: false,
        }
    }

    #[test]
    fn cost_examples() {
        let units = vec![unit(1, 0.5, 10.0, 4.0)];
        let off = Schedule::zeros(24, 1);
        assert_eq!(operating_cost(&off, &units, &[false]).unwrap(), 0.0);

        let mut one = Schedule::zeros(1, 1);
        one.u[0][0] = true;
        one.p_g[0][0] = 100.0;
        assert_eq!(operating_cost(&one, &units, &[false]).unwrap(), 60.0);

        let mut down = Schedule::zeros(2, 1);
        down.u[0][0] = true;
        assert_eq!(operating_cost(&down, &units, &[true]).unwrap(), 4.0);

        let mut neg = one.clone();
        neg.p_g[0][0] = -1.0;
        assert!(matches!(operating_cost(&neg, &units, &[false]), Err(SchedulerError::NegativeOutput { .. })));
    }

    fn sample_day() -> (Network, Scenario, Schedule) {
        let net = Network::ieee33_hybrid();
        let s = Scenario::reference();
        let sch = Schedule::from_dispatch_csv(SAMPLE_DISPATCH_CSV, &net).unwrap();
        (net, s, sch)
    }

    #[test]
    fn sample_dispatch_hour12_respects_caps_and_ramps() {
        let (net, s, sch) = sample_day();
        let rep = evaluate_constraints(&sch, &s, &net).unwrap();
        let at12 = |c| rep.of_class(c).filter(|v| v.hour == 11).count();
        assert_eq!(at12(ConstraintClass::Capacity), 0);
        assert_eq!(at12(ConstraintClass::Ramp), 0);
        // five columns rounded to 0.01 kW
        assert_eq!(rep.of_class(ConstraintClass::DcBalance).filter(|v| v.magnitude > 0.1).count(), 0);
    }

    #[test]
    fn single_capacity_and_ramp_violations() {
        let (net, s, sch) = sample_day();
        let base = evaluate_constraints(&sch, &s, &net).unwrap();
        let mt3 = net.dg_units.iter().position(|u| u.name == "MT3").unwrap();
        let cap = net.dg_units[mt3].p_max;

        let mut over = sch.clone();
        over.p_g[0][mt3] = cap + 1.0;
        let rep = evaluate_constraints(&over, &s, &net).unwrap();
        let caps: Vec<_> = rep.of_class(ConstraintClass::Capacity).collect();
        assert_eq!(caps.len(), base.of_class(ConstraintClass::Capacity).count() + 1);
        assert!(caps.iter().any(|v| v.hour == 0 && (v.magnitude - 1.0).abs() < 1e-9));

        let mut ramp = sch.clone();
        let r = net.dg_units[mt3].ramp_up;
        ramp.p_g[4][mt3] = 900.0;
        ramp.p_g[5][mt3] = 900.0 + r + 50.0;
        ramp.p_g[6][mt3] = 900.0 + r + 50.0;
        let rep = evaluate_constraints(&ramp, &s, &net).unwrap();
        let v: Vec<_> = rep.of_class(ConstraintClass::Ramp).filter(|v| v.hour == 5).collect();
        assert_eq!(v.len(), 1);
        assert!((v[0].magnitude - 50.0).abs() < 1e-9);
    }

    #[test]
    fn reserve_flags_exact_committed_capacity() {
        let (mut net, mut s, _) = sample_day();
        // one dispatchable unit whose nameplate equals demand plus losses
        net.dg_units.retain(|u| u.grid_forming);
        net.converter = None;
        net.buses.retain(|b| b.subgrid == Subgrid::Ac);
        s.dc_load_demand = vec![0.0; 24];
        let mut sch = Schedule::zeros(24, 1);
        let t = 3;
        let data = hour_data(&net, &s, t).unwrap();
        let topo = RadialTopology::new(&net).unwrap();
        sch.u[t][0] = true;
        let flow = solve_with_topology(&net, &topo, &data.loads, 1e-10, 100).unwrap();
        sch.p_g[t][0] = flow.slack_p_kw;
        net.dg_units[0].p_max = flow.slack_p_kw;
        let mut rep = ViolationReport::default();
        evaluate_hour(&sch, &net, &topo, &data, t, &mut rep).unwrap();
        let r: Vec<_> = rep.of_class(ConstraintClass::Reserve).collect();
        assert_eq!(r.len(), 1);
        assert!((r[0].magnitude - data.reserve).abs() < 1e-6);
        assert!(rep.of_class(ConstraintClass::AcBalance).next().is_none());
    }

    #[test]
    fn csv_exports() {
        let (net, _, sch) = sample_day();
        let rows = schedule_csv_rows(&sch, &net.dg_units, &[true; 9]).unwrap();
        assert_eq!(rows.len(), 24 * 9);
        assert!(rows[0].starts_with("1,1,0,0.000,-439.580,"));
        let wide = dispatch_csv_rows(&sch);
        assert_eq!(wide.len(), 24);
        assert_eq!(dispatch_csv_header(&net.dg_units), "hour,PV1,WT1,FC,MT1,MT2,MT3,WT2,WT3,PV2,p_conv_kw");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cost_invariant_under_unit_permutation(
                seed in proptest::collection::vec((0.0..1.0f64, 0.0..50.0f64, 0.0..20.0f64), 4),
                bits in proptest::collection::vec(any::<bool>(), 4 * 6),
                outs in proptest::collection::vec(0.0..400.0f64, 4 * 6),
                rot in 0usize..4,
            ) {
                let units: Vec<DgUnit> = seed.iter().enumerate().map(|(k, &(c, on, off))| unit(k as u32, c, on, off)).collect();
                let mut s = Schedule::zeros(6, 4);
                for t in 0..6 {
                    for i in 0..4 {
                        s.u[t][i] = bits[t * 4 + i];
                        s.p_g[t][i] = if s.u[t][i] { outs[t * 4 + i] } else { 0.0 };
                    }
                }
                let init = [true, false, true, false];
                let perm: Vec<usize> = (0..4).map(|k| (k + rot) % 4).collect();
                let pu: Vec<DgUnit> = perm.iter().map(|&k| units[k].clone()).collect();
                let mut ps = s.clone();
                for t in 0..6 {
                    ps.u[t] = perm.iter().map(|&k| s.u[t][k]).collect();
                    ps.p_g[t] = perm.iter().map(|&k| s.p_g[t][k]).collect();
                }
                let pinit: Vec<bool> = perm.iter().map(|&k| init[k]).collect();
                let a = operating_cost(&s, &units, &init).unwrap();
                let b = operating_cost(&ps, &pu, &pinit).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
