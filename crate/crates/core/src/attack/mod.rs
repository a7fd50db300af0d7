//! False-data injection into meter streams and the operator's response to
//! what it observes: ramp-limited redispatch, emergency shutdown and load
//! shedding.

mod replay;

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::DetectorError;
use crate::forecaster::ForecastError;
use crate::grid::{bus_load, BusId, DgUnit, GridError, Network, Scenario, Subgrid, UnitId};
use crate::powerflow::{solve_with_topology, PowerFlowError, RadialTopology, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::scheduler::{hour_data, hour_injections, HourData, Schedule, SchedulerError};

pub use replay::{detection_pipeline_replay, synthetic_meters, ReplayConfig};

/// Residual imbalance (kW) below which the operator takes no further action.
pub const ACTION_TOLERANCE_KW: f64 = 1e-6;
const BALANCE_PASSES: usize = 20;
const SHED_BISECTION_STEPS: usize = 60;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack spec: {0}")]
    Spec(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Reduce,
    Inflate,
}

/// Fraction in `[0, 1]` by which targeted readings are falsified.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Severity(f64);

impl Severity {
    pub fn new(rho: f64) -> Result<Self, AttackError> {
        if (0.0..=1.0).contains(&rho) {
            Ok(Self(rho))
        } else {
            Err(AttackError::Spec(format!("severity {rho} outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Severity {
    type Error = AttackError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Severity> for f64 {
    fn from(s: Severity) -> f64 {
        s.0
    }
}

/// JSON form: `{targets, start_hour, duration, severity, direction}`.
/// Hours are 1-based, as in the report tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(rename = "targets")]
    pub target_buses: BTreeSet<BusId>,
    pub start_hour: usize,
    #[serde(rename = "duration")]
    pub duration_hours: usize,
    pub severity: Severity,
    pub direction: Direction,
}

impl AttackSpec {
    pub fn from_json(text: &str) -> Result<Self, AttackError> {
        serde_json::from_str(text).map_err(|e| AttackError::Spec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Whether the 0-based hour `t` lies in the attack window.
    pub fn is_active(&self, t: usize) -> bool {
        t + 1 >= self.start_hour && t + 1 < self.start_hour + self.duration_hours
    }

    pub fn validate(&self, network: &Network, horizon: usize) -> Result<(), AttackError> {
        if let Some(b) = self.target_buses.iter().find(|&&b| network.bus(b).is_none()) {
            return Err(AttackError::Spec(format!("target bus {b} not in network")));
        }
        self.check_window(horizon)
    }

    fn check_window(&self, horizon: usize) -> Result<(), AttackError> {
        if self.start_hour == 0 || self.start_hour + self.duration_hours > horizon + 1 {
            return Err(AttackError::Spec(format!(
                "window {}..{} outside hours 1..={horizon}",
                self.start_hour,
                self.start_hour + self.duration_hours
            )));
        }
        Ok(())
    }

    /// What a targeted meter reports for a true reading `kw`.
    pub fn falsify(&self, kw: f64) -> f64 {
        match self.direction {
            Direction::Reduce => kw * (1.0 - self.severity.get()),
            Direction::Inflate => kw * (1.0 + self.severity.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterSeries {
    pub meter_id: u32,
    pub kw: Vec<f64>,
}

/// Hourly readings of a set of meters starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterReadings {
    pub start: NaiveDateTime,
    pub meters: Vec<MeterSeries>,
}

impl MeterReadings {
    pub fn hours(&self) -> usize {
        self.meters.iter().map(|m| m.kw.len()).min().unwrap_or(0)
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + Duration::hours(t as i64)
    }

    pub fn meter(&self, id: u32) -> Option<&MeterSeries> {
        self.meters.iter().find(|m| m.meter_id == id)
    }

    /// One meter per bus with demand, reading the scenario's active load.
    pub fn from_scenario(network: &Network, scenario: &Scenario) -> Result<Self, AttackError> {
        let mut meters = Vec::new();
        for b in network.buses.iter().filter(|b| b.peak_active_load > 0.0) {
            let kw = (0..scenario.horizon()).map(|t| bus_load(network, b, t, scenario).map(|(p, _)| p)).collect::<Result<_, _>>()?;
            meters.push(MeterSeries { meter_id: b.id, kw });
        }
        let start = NaiveDateTime::parse_from_str("2021-01-04T00:00", "%Y-%m-%dT%H:%M").expect("valid literal");
        Ok(Self { start, meters })
    }

    pub fn total(&self, t: usize) -> f64 {
        self.meters.iter().map(|m| m.kw[t]).sum()
    }
}

/// Targeted meters report the falsified value during the attack window;
/// everything else passes through unchanged.
pub fn inject(readings: &MeterReadings, spec: &AttackSpec) -> Result<MeterReadings, AttackError> {
    spec.check_window(readings.hours())?;
    let mut out = readings.clone();
    for m in out.meters.iter_mut().filter(|m| spec.target_buses.contains(&m.meter_id)) {
        for (t, kw) in m.kw.iter_mut().enumerate() {
            if spec.is_active(t) {
                *kw = spec.falsify(*kw);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorResponse {
    /// change in set-point per unit (kW); a shut unit shows minus its output
    pub redispatch_kw: Vec<f64>,
    pub shutdowns: Vec<UnitId>,
    pub startups: Vec<UnitId>,
    /// aggregate change made within ramp limits, before any switching (kW)
    pub ramp_response_kw: f64,
    /// imbalance the operator could not act on; positive is excess
    pub residual_kw: f64,
}

fn closest_to(candidates: impl Iterator<Item = (usize, f64)>, target: f64, units: &[DgUnit]) -> Option<usize> {
    candidates
        .min_by(|a, b| {
            (a.1 - target).abs().total_cmp(&(b.1 - target).abs()).then(units[a.0].id.cmp(&units[b.0].id))
        })
        .map(|(i, _)| i)
}

/// Response to an observed imbalance (positive: generation exceeds observed
/// demand). Dispatchable units first move within their ramp limits, shared
/// in proportion to each unit's capability; any residual excess shuts down
/// the one unit whose remaining output is closest to it, and any residual
/// deficit starts the offline unit whose first-hour capability is closest.
pub fn operator_response(outputs: &[f64], online: &[bool], units: &[DgUnit], imbalance_kw: f64) -> OperatorResponse {
    let n = units.len();
    let mut resp = OperatorResponse { redispatch_kw: vec![0.0; n], shutdowns: Vec::new(), startups: Vec::new(), ramp_response_kw: 0.0, residual_kw: imbalance_kw };
    if imbalance_kw.abs() <= ACTION_TOLERANCE_KW {
        resp.residual_kw = 0.0;
        return resp;
    }
    let movable = |i: usize| online[i] && units[i].dispatchable;
    let excess = imbalance_kw > 0.0;
    let caps: Vec<f64> = (0..n)
        .map(|i| {
            let u = &units[i];
            match (movable(i), excess) {
                (false, _) => 0.0,
                (true, true) => u.ramp_down.min(outputs[i] - u.p_min).max(0.0),
                (true, false) => u.ramp_up.min(u.p_max - outputs[i]).max(0.0),
            }
        })
        .collect();
    let capability: f64 = caps.iter().sum();
    let need = imbalance_kw.abs();
    let moved = need.min(capability);
    resp.ramp_response_kw = if excess { -moved } else { moved };
    if capability > 0.0 {
        let share = moved / capability;
        for i in 0..n {
            let d = if moved == capability { caps[i] } else { caps[i] * share };
            resp.redispatch_kw[i] = if excess { -d } else { d };
        }
    }
    let residual = need - moved;
    if residual <= ACTION_TOLERANCE_KW {
        resp.residual_kw = 0.0;
        return resp;
    }
    if excess {
        let after = (0..n).filter(|&i| movable(i)).map(|i| (i, outputs[i] + resp.redispatch_kw[i])).filter(|&(_, p)| p > 0.0);
        match closest_to(after, residual, units) {
            Some(i) => {
                let removed = outputs[i] + resp.redispatch_kw[i];
                resp.redispatch_kw[i] = -outputs[i];
                resp.shutdowns.push(units[i].id);
                resp.residual_kw = residual - removed;
            }
            None => resp.residual_kw = residual,
        }
    } else {
        let offline = (0..n).filter(|&i| !online[i] && units[i].dispatchable).map(|i| (i, units[i].p_max.min(units[i].ramp_up)));
        match closest_to(offline, residual, units) {
            Some(i) => {
                let cap = units[i].p_max.min(units[i].ramp_up);
                let p = cap.min(residual).max(units[i].p_min.min(cap));
                resp.redispatch_kw[i] = p;
                resp.startups.push(units[i].id);
                resp.residual_kw = -(residual - p);
            }
            None => resp.residual_kw = -residual,
        }
    }
    resp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackParams {
    /// hours a shut unit stays off, counting the shutdown hour
    pub restart_delay_hours: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self { restart_delay_hours: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HourImpact {
    /// 1-based
    pub hour: usize,
    pub observed_imbalance_kw: f64,
    /// operator's aggregate ramp-limited move; negative lowers output
    pub ramp_response_kw: f64,
    pub redispatch_kw: Vec<f64>,
    pub emergency_shutdowns: Vec<UnitId>,
    /// delivered output per unit (kW)
    pub output_kw: Vec<f64>,
    pub p_conv_kw: f64,
    pub load_shed_kw: f64,
    pub loss_kw: f64,
    pub operation_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactTotals {
    pub shed_kwh: f64,
    pub ens_cost: f64,
    pub operation_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactReport {
    pub unit_names: Vec<String>,
    pub hours: Vec<HourImpact>,
    pub totals: ImpactTotals,
}

pub const IMPACT_CSV_TAIL: &str = "p_conv_kw,observed_imbalance_kw,load_shed_kw,loss_kw,shutdowns";

impl ImpactReport {
    pub fn csv_header(&self) -> String {
        let mut h = String::from("hour");
        for n in &self.unit_names {
            h.push(',');
            h.push_str(n);
        }
        h.push(',');
        h.push_str(IMPACT_CSV_TAIL);
        h
    }

    /// Rows mirroring the dispatch table, shutdown ids joined by `;`.
    pub fn csv_rows(&self) -> Vec<String> {
        self.hours
            .iter()
            .map(|r| {
                let mut s = r.hour.to_string();
                for p in &r.output_kw {
                    s.push_str(&format!(",{p:.3}"));
                }
                let shut: Vec<String> = r.emergency_shutdowns.iter().map(u32::to_string).collect();
                s.push_str(&format!(
                    ",{:.3},{:.3},{:.3},{:.3},{}",
                    r.p_conv_kw,
                    r.observed_imbalance_kw,
                    r.load_shed_kw,
                    r.loss_kw,
                    shut.join(";")
                ));
                s
            })
            .collect()
    }

    pub fn csv_footer(&self) -> String {
        format!(
            "# total_shed_kwh={:.3},ens_cost={:.3},operation_cost={:.3}",
            self.totals.shed_kwh, self.totals.ens_cost, self.totals.operation_cost
        )
    }

    /// Delivered dispatch as a schedule (a unit is committed when it produces).
    pub fn delivered_schedule(&self) -> Schedule {
        Schedule {
            p_g: self.hours.iter().map(|r| r.output_kw.clone()).collect(),
            u: self.hours.iter().map(|r| r.output_kw.iter().map(|&p| p > 0.0).collect()).collect(),
            p_conv: self.hours.iter().map(|r| r.p_conv_kw).collect(),
        }
    }
}

/// Output window of a unit for one hour given last hour's delivery.
fn window(unit: &DgUnit, prev: Option<f64>) -> (f64, f64) {
    match prev {
        None => (unit.p_min, unit.p_max),
        Some(p) if p > 0.0 => ((p - unit.ramp_down).max(unit.p_min), (p + unit.ramp_up).min(unit.p_max)),
        Some(_) => {
            let cap = unit.p_max.min(unit.ramp_up);
            (unit.p_min.min(cap), cap)
        }
    }
}

struct HourState<'a> {
    network: &'a Network,
    topo: &'a RadialTopology,
    data: HourData,
    p: Vec<f64>,
    on: Vec<bool>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    slack: Option<usize>,
}

impl HourState<'_> {
    fn is_dc(&self, i: usize) -> bool {
        self.network.unit_subgrid(&self.network.dg_units[i]) == Subgrid::Dc
    }

    fn dc_gen(&self) -> f64 {
        (0..self.p.len()).filter(|&i| self.on[i] && self.is_dc(i)).map(|i| self.p[i]).sum()
    }

    /// Converter set-point and dc shortfall beyond its import limit.
    fn converter(&self) -> (f64, f64) {
        let need = self.data.dc_demand - self.dc_gen();
        match &self.network.converter {
            Some(c) if need > c.p_max => (c.p_max, need - c.p_max),
            Some(_) => (need, 0.0),
            None => (0.0, need.max(0.0)),
        }
    }

    /// Slack-bus delivery needed with ac loads scaled by `1 - shed`.
    fn slack_need(&self, shed: f64) -> Result<(f64, f64), AttackError> {
        let mut data = self.data.clone();
        for v in data.loads.p_kw.iter_mut().chain(data.loads.q_kvar.iter_mut()) {
            *v *= 1.0 - shed;
        }
        let mut on = self.on.clone();
        if let Some(g) = self.slack {
            on[g] = false;
        }
        let (p_conv, _) = self.converter();
        let inj = hour_injections(self.network, &data, &self.p, &on, p_conv);
        let pf = solve_with_topology(self.network, self.topo, &inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
        Ok((pf.slack_p_kw, pf.total_loss))
    }

    fn movers(&self, cheapest_first: bool) -> Vec<usize> {
        let units = &self.network.dg_units;
        let mut v: Vec<usize> = (0..units.len()).filter(|&i| self.on[i] && units[i].dispatchable && Some(i) != self.slack).collect();
        v.sort_by(|&a, &b| units[a].energy_cost.total_cmp(&units[b].energy_cost).then(a.cmp(&b)));
        if !cheapest_first {
            v.reverse();
        }
        v
    }

    /// Moves up to `amount` kW (sign gives direction) across the other
    /// units; dc units only as far as the converter allows.
    fn shift(&mut self, amount: f64) -> f64 {
        let raise = amount > 0.0;
        let mut left = amount.abs();
        for i in self.movers(raise) {
            if left <= 0.0 {
                break;
            }
            let mut room = if raise { self.hi[i] - self.p[i] } else { self.p[i] - self.lo[i] };
            if self.is_dc(i) {
                if let Some(c) = &self.network.converter {
                    let (p_conv, _) = self.converter();
                    room = room.min(if raise { p_conv - c.p_min } else { c.p_max - p_conv }).max(0.0);
                }
            }
            let d = room.min(left).max(0.0);
            self.p[i] += if raise { d } else { -d };
            left -= d;
        }
        amount.abs() - left
    }
}

/// Simulates the horizon hour by hour: readings are falsified, the operator
/// acts on the observed imbalance, then the true balance is restored by the
/// online units within their hourly ramp windows and, failing that, by
/// shedding ac load in proportion across load buses.
pub fn run_attack_scenario(
    scenario: &Scenario,
    network: &Network,
    schedule: &Schedule,
    spec: &AttackSpec,
    params: &AttackParams,
) -> Result<ImpactReport, AttackError> {
    let n_t = scenario.horizon();
    let units = &network.dg_units;
    let n_u = units.len();
    if schedule.hours() != n_t || schedule.units() != n_u {
        return Err(AttackError::Config(format!("schedule must cover {n_t} hours x {n_u} units")));
    }
    spec.validate(network, n_t)?;
    let topo = RadialTopology::new(network)?;
    let truth = MeterReadings::from_scenario(network, scenario)?;
    let observed = inject(&truth, spec)?;
    let gf = network.grid_forming_index();

    let mut down_until = vec![0usize; n_u];
    let mut prev: Option<Vec<f64>> = None;
    let mut prev_on: Vec<bool> = vec![true; n_u];
    let mut rows = Vec::with_capacity(n_t);

    for t in 0..n_t {
        let data = hour_data(network, scenario, t)?;
        let planned: Vec<f64> = (0..n_u).map(|i| if schedule.u[t][i] { schedule.p_g[t][i] } else { 0.0 }).collect();
        let available: Vec<bool> = (0..n_u).map(|i| schedule.u[t][i] && t >= down_until[i]).collect();

        let imbalance = truth.total(t) - observed.total(t);
        let plan_now: Vec<f64> = (0..n_u).map(|i| if available[i] { planned[i] } else { 0.0 }).collect();
        let resp = operator_response(&plan_now, &available, units, imbalance);

        let mut on = available.clone();
        for id in &resp.shutdowns {
            let i = units.iter().position(|u| u.id == *id).expect("known unit");
            on[i] = false;
            down_until[i] = t + params.restart_delay_hours;
        }
        for id in &resp.startups {
            let i = units.iter().position(|u| u.id == *id).expect("known unit");
            on[i] = true;
        }

        let mut lo = vec![0.0; n_u];
        let mut hi = vec![0.0; n_u];
        let mut p = vec![0.0; n_u];
        for i in 0..n_u {
            if !on[i] {
                continue;
            }
            if !units[i].dispatchable {
                p[i] = data.res[i];
                lo[i] = p[i];
                hi[i] = p[i];
                continue;
            }
            let last = prev.as_ref().map(|v| if prev_on[i] { v[i] } else { 0.0 });
            let (l, h) = window(&units[i], last);
            lo[i] = l;
            hi[i] = h.max(l);
            p[i] = (plan_now[i] + resp.redispatch_kw[i]).clamp(lo[i], hi[i]);
        }
        let slack = gf.filter(|&g| on[g]);
        let mut st = HourState { network, topo: &topo, data, p, on, lo, hi, slack };
        let (g_lo, g_hi) = slack.map_or((0.0, 0.0), |g| (st.lo[g], st.hi[g]));

        let mut need = st.slack_need(0.0)?.0;
        for _ in 0..BALANCE_PASSES {
            let moved = if need > g_hi + ACTION_TOLERANCE_KW {
                st.shift(need - g_hi)
            } else if need < g_lo - ACTION_TOLERANCE_KW {
                st.shift(need - g_lo)
            } else {
                break;
            };
            need = st.slack_need(0.0)?.0;
            if moved <= ACTION_TOLERANCE_KW {
                break;
            }
        }

        let mut shed = 0.0;
        let (mut lo_s, mut hi_s) = (0.0, 1.0);
        if need > g_hi + ACTION_TOLERANCE_KW {
            for _ in 0..SHED_BISECTION_STEPS {
                let mid = 0.5 * (lo_s + hi_s);
                if st.slack_need(mid)?.0 > g_hi {
                    lo_s = mid;
                } else {
                    hi_s = mid;
                }
            }
            shed = hi_s;
        }
        let (slack_p, loss) = st.slack_need(shed)?;
        if let Some(g) = slack {
            st.p[g] = slack_p;
        }
        let (p_conv, dc_short) = st.converter();
        let load_shed_kw = shed * st.data.ac_demand + dc_short;

        let mut cost = 0.0;
        for (i, u) in units.iter().enumerate() {
            let was = prev_on[i];
            if st.on[i] {
                cost += st.p[i] * u.energy_cost;
                if !was {
                    cost += u.startup_cost;
                }
            } else if was {
                cost += u.shutdown_cost;
            }
        }

        rows.push(HourImpact {
            hour: t + 1,
            observed_imbalance_kw: imbalance,
            ramp_response_kw: resp.ramp_response_kw,
            redispatch_kw: resp.redispatch_kw,
            emergency_shutdowns: resp.shutdowns,
            output_kw: st.p.clone(),
            p_conv_kw: p_conv,
            load_shed_kw,
            loss_kw: loss,
            operation_cost: cost,
        });
        prev_on = st.on;
        prev = Some(st.p);
    }

    let shed_kwh: f64 = rows.iter().map(|r| r.load_shed_kw).sum();
    let totals = ImpactTotals {
        shed_kwh,
        ens_cost: shed_kwh * scenario.ens_penalty,
        operation_cost: rows.iter().map(|r| r.operation_cost).sum(),
    };
    Ok(ImpactReport { unit_names: units.iter().map(|u| u.name.clone()).collect(), hours: rows, totals })
}

/// Bundled baseline dispatch produced by the scheduler for the reference case.
pub const BASELINE_DISPATCH_CSV: &str = include_str!("../../data/baseline_dispatch.csv");

/// The reference attack: 70% under-reporting on ten load buses at hour 12.
pub fn reference_spec() -> AttackSpec {
    AttackSpec {
        target_buses: [7, 8, 20, 21, 24, 25, 29, 30, 31, 32].into_iter().collect(),
        start_hour: 12,
        duration_hours: 1,
        severity: Severity(0.7),
        direction: Direction::Reduce,
    }
}
