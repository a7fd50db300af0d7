//! Mapping between swarm positions and schedules.
//!
//! Each hour contributes a commitment bit and an output for every decision
//! unit. Decoding walks the horizon in order, clamping outputs to the unit
//! box intersected with the ramp window, fixing the converter from the dc
//! balance and letting the grid-forming unit pick up the ac remainder. The
//! repaired values are written back into the position.

use crate::grid::{DgUnit, Network, Scenario, Subgrid};
use crate::powerflow::{solve_with_topology, RadialTopology, DEFAULT_MAX_ITERATIONS};

use super::{
    dc_generation, evaluate_hour, hour_data, hour_injections, HourData, Schedule, SchedulerError, SearchSpace,
    ViolationReport, BALANCE_TOLERANCE_KW,
};

const FLOOR_MARGIN_KW: f64 = 5.0;
const REPAIR_PASSES: usize = 4;
/// Looser tolerance inside repair; final evaluation uses the default.
const REPAIR_PF_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitRole {
    /// Fixed at available output.
    Renewable,
    /// Commitment and output chosen by the optimizer.
    Decision,
    /// Always on, balances the ac side at the slack bus.
    GridForming,
}

/// Precomputed scheduling problem for one network and scenario.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub(crate) network: &'a Network,
    pub(crate) topo: RadialTopology,
    pub(crate) hours: Vec<HourData>,
    roles: Vec<UnitRole>,
    decision: Vec<usize>,
    pub(crate) initial: Vec<bool>,
    polish: bool,
    /// Lowest grid-forming output per hour that still lets it ramp into
    /// later peaks with every other unit at full output.
    gf_floor: Vec<f64>,
}

/// Per-hour working state during decoding.
struct HourState {
    on: Vec<bool>,
    p: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    can_off: Vec<bool>,
    can_start: Vec<bool>,
}

impl<'a> Problem<'a> {
    pub fn new(network: &'a Network, scenario: &Scenario, polish: bool) -> Result<Self, SchedulerError> {
        network.validate()?;
        scenario.validate()?;
        let topo = RadialTopology::new(network)?;
        let hours = (0..scenario.horizon()).map(|t| hour_data(network, scenario, t)).collect::<Result<_, _>>()?;
        let roles: Vec<UnitRole> = network
            .dg_units
            .iter()
            .map(|u| {
                if !u.dispatchable {
                    UnitRole::Renewable
                } else if u.grid_forming {
                    UnitRole::GridForming
                } else {
                    UnitRole::Decision
                }
            })
            .collect();
        let decision = roles.iter().enumerate().filter(|(_, r)| **r == UnitRole::Decision).map(|(i, _)| i).collect();
        let mut problem = Self {
            network,
            topo,
            hours,
            roles,
            decision,
            initial: vec![true; network.dg_units.len()],
            polish,
            gf_floor: Vec::new(),
        };
        problem.gf_floor = problem.grid_forming_floor()?;
        Ok(problem)
    }

    fn grid_forming_floor(&self) -> Result<Vec<f64>, SchedulerError> {
        let Some(gf) = self.grid_forming() else {
            return Ok(vec![0.0; self.horizon()]);
        };
        let (c_min, _) = self.converter_bounds();
        let mut floor = Vec::with_capacity(self.horizon());
        for t in 0..self.horizon() {
            let mut st = self.windows(t, None);
            for &i in &self.decision {
                st.on[i] = true;
                st.p[i] = st.hi[i];
            }
            let mut p_conv = self.hours[t].dc_demand - dc_generation(self.network, &st.p, &st.on);
            if self.network.converter.is_some() && p_conv < c_min {
                let dear: Vec<usize> = self.merit_order(false).into_iter().filter(|&i| self.is_dc(i)).collect();
                let excess = c_min - p_conv;
                self.shift(&mut st, &mut p_conv, &dear, -excess, false, false);
            }
            floor.push(self.slack_need(&self.hours[t], &st, Some(gf), p_conv)?.max(0.0));
        }
        // keep a little headroom for loss differences between hours
        let ramp = self.unit(gf).ramp_up - FLOOR_MARGIN_KW;
        for t in (0..self.horizon().saturating_sub(1)).rev() {
            floor[t] = floor[t].max(floor[t + 1] - ramp);
        }
        Ok(floor)
    }

    fn grid_forming(&self) -> Option<usize> {
        self.roles.iter().position(|r| *r == UnitRole::GridForming)
    }

    pub fn roles(&self) -> &[UnitRole] {
        &self.roles
    }

    pub fn horizon(&self) -> usize {
        self.hours.len()
    }

    pub fn dims(&self) -> usize {
        2 * self.decision.len() * self.horizon()
    }

    fn slot(&self, t: usize, k: usize) -> usize {
        2 * (t * self.decision.len() + k)
    }

    pub fn search_space(&self) -> SearchSpace {
        let mut s = SearchSpace { lower: vec![0.0; self.dims()], upper: vec![1.0; self.dims()], binary: vec![true; self.dims()] };
        for t in 0..self.horizon() {
            for (k, &i) in self.decision.iter().enumerate() {
                let j = self.slot(t, k) + 1;
                let u = &self.network.dg_units[i];
                s.lower[j] = u.p_min;
                s.upper[j] = u.p_max;
                s.binary[j] = false;
            }
        }
        s
    }

    /// Position with every decision unit on at full output.
    pub fn all_on_position(&self) -> Vec<f64> {
        let mut x = self.search_space().upper;
        for v in x.iter_mut().step_by(2) {
            *v = 1.0;
        }
        x
    }

    fn unit(&self, i: usize) -> &DgUnit {
        &self.network.dg_units[i]
    }

    /// Repairs `x` in place and returns the schedule it encodes.
    pub fn decode(&self, x: &mut [f64]) -> Result<Schedule, SchedulerError> {
        if x.len() != self.dims() {
            return Err(SchedulerError::Dimension(format!("position has {} entries, expected {}", x.len(), self.dims())));
        }
        let n = self.network.dg_units.len();
        let mut sch = Schedule::zeros(self.horizon(), n);
        for t in 0..self.horizon() {
            let prev: Option<Vec<f64>> =
                (t > 0).then(|| (0..n).map(|i| if sch.u[t - 1][i] { sch.p_g[t - 1][i] } else { 0.0 }).collect());
            let mut st = self.windows(t, prev.as_deref());
            for (k, &i) in self.decision.iter().enumerate() {
                let j = self.slot(t, k);
                let mut on = x[j] >= 0.5;
                if !on && !st.can_off[i] {
                    on = true;
                }
                if on && !st.can_start[i] && st.can_off[i] {
                    on = false;
                }
                st.on[i] = on;
                st.p[i] = if on { x[j + 1].clamp(st.lo[i], st.hi[i]) } else { 0.0 };
            }
            let p_conv = self.repair_hour(t, &mut st)?;
            for (k, &i) in self.decision.iter().enumerate() {
                let j = self.slot(t, k);
                x[j] = f64::from(u8::from(st.on[i]));
                if st.on[i] {
                    x[j + 1] = st.p[i];
                }
            }
            sch.u[t] = st.on;
            sch.p_g[t] = st.p;
            sch.p_conv[t] = p_conv;
        }
        Ok(sch)
    }

    fn windows(&self, t: usize, prev: Option<&[f64]>) -> HourState {
        let n = self.network.dg_units.len();
        let data = &self.hours[t];
        let mut st = HourState {
            on: vec![false; n],
            p: vec![0.0; n],
            lo: vec![0.0; n],
            hi: vec![0.0; n],
            can_off: vec![true; n],
            can_start: vec![true; n],
        };
        for i in 0..n {
            let u = self.unit(i);
            match self.roles[i] {
                UnitRole::Renewable => {
                    st.on[i] = true;
                    st.p[i] = data.res[i].min(u.capacity);
                    st.lo[i] = st.p[i];
                    st.hi[i] = st.p[i];
                }
                UnitRole::Decision | UnitRole::GridForming => {
                    let (lo, hi) = match prev {
                        Some(pp) => (u.p_min.max(pp[i] - u.ramp_down), u.p_max.min(pp[i] + u.ramp_up)),
                        None => (u.p_min, u.p_max),
                    };
                    st.lo[i] = lo;
                    st.hi[i] = hi.max(lo);
                    st.can_start[i] = lo <= hi;
                    st.can_off[i] = prev.is_none_or(|pp| pp[i] <= u.ramp_down);
                    if self.roles[i] == UnitRole::GridForming {
                        st.on[i] = true;
                    }
                }
            }
        }
        st
    }

    /// Converter room in the direction of more dc export (down) and more dc
    /// import (up).
    fn converter_bounds(&self) -> (f64, f64) {
        self.network.converter.as_ref().map_or((0.0, 0.0), |c| (c.p_min, c.p_max))
    }

    fn is_dc(&self, i: usize) -> bool {
        self.network.unit_subgrid(self.unit(i)) == Subgrid::Dc
    }

    fn merit_order(&self, cheapest_first: bool) -> Vec<usize> {
        let mut v = self.decision.clone();
        v.sort_by(|&a, &b| {
            let (ca, cb) = (self.unit(a).energy_cost, self.unit(b).energy_cost);
            let o = ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b));
            if cheapest_first {
                o
            } else {
                o.reverse()
            }
        });
        v
    }

    /// Moves up to `amount` kW (positive raises, negative lowers) across the
    /// given units in order. With `respect_converter`, dc units only move as
    /// far as the converter limits allow. Returns the kW moved.
    fn shift(
        &self,
        st: &mut HourState,
        p_conv: &mut f64,
        units: &[usize],
        amount: f64,
        allow_start: bool,
        respect_converter: bool,
    ) -> f64 {
        let (c_min, c_max) = self.converter_bounds();
        let has_conv = self.network.converter.is_some();
        let raise = amount > 0.0;
        let mut left = amount.abs();
        for &i in units {
            if left <= 0.0 {
                break;
            }
            let starting = !st.on[i];
            if starting && !(raise && allow_start && st.can_start[i]) {
                continue;
            }
            let dc = self.is_dc(i);
            if dc && !has_conv {
                continue;
            }
            let cur = st.p[i];
            let mut d = if raise { st.hi[i] - cur } else { cur - st.lo[i] }.min(left).max(0.0);
            if dc && respect_converter {
                d = d.min(if raise { *p_conv - c_min } else { c_max - *p_conv }).max(0.0);
            }
            if d <= 0.0 {
                continue;
            }
            let new = if raise { (cur + d).max(st.lo[i]) } else { cur - d };
            let delta = new - cur;
            st.on[i] = true;
            st.p[i] = new;
            if dc {
                *p_conv -= delta;
            }
            left -= delta.abs();
        }
        amount.abs() - left.max(0.0)
    }

    fn repair_hour(&self, t: usize, st: &mut HourState) -> Result<f64, SchedulerError> {
        let data = &self.hours[t];
        let (c_min, c_max) = self.converter_bounds();
        let mut p_conv = data.dc_demand - dc_generation(self.network, &st.p, &st.on);
        if self.network.converter.is_some() {
            let dc_units: Vec<usize> = self.merit_order(true).into_iter().filter(|&i| self.is_dc(i)).collect();
            if p_conv > c_max {
                // dc short: raise dc generation, which lowers p_conv
                let short = p_conv - c_max;
                self.shift(st, &mut p_conv, &dc_units, short, true, false);
            } else if p_conv < c_min {
                let rev: Vec<usize> = dc_units.iter().rev().copied().collect();
                let excess = c_min - p_conv;
                self.shift(st, &mut p_conv, &rev, -excess, false, false);
            }
        }

        let cheap = self.merit_order(true);
        let dear = self.merit_order(false);
        let Some(gf) = self.grid_forming() else {
            // without a grid-forming unit the decision units close the ac
            // balance themselves
            for _ in 0..REPAIR_PASSES {
                let need = self.slack_need(data, st, None, p_conv)?;
                let moved = if need > BALANCE_TOLERANCE_KW {
                    self.shift(st, &mut p_conv, &cheap, need, true, true)
                } else if need < -BALANCE_TOLERANCE_KW {
                    self.shift(st, &mut p_conv, &dear, need, false, true)
                } else {
                    0.0
                };
                if moved <= BALANCE_TOLERANCE_KW {
                    break;
                }
            }
            return Ok(p_conv);
        };
        let target = self.gf_floor[t].clamp(st.lo[gf], st.hi[gf]);
        let gf_cost = self.unit(gf).energy_cost;
        for _ in 0..REPAIR_PASSES {
            let need = self.slack_need(data, st, Some(gf), p_conv)?;
            let moved = if need > st.hi[gf] + BALANCE_TOLERANCE_KW {
                self.shift(st, &mut p_conv, &cheap, need - st.hi[gf], true, true)
            } else if need < st.lo[gf] - BALANCE_TOLERANCE_KW {
                self.shift(st, &mut p_conv, &dear, -(st.lo[gf] - need), false, true)
            } else if need < target - BALANCE_TOLERANCE_KW {
                self.shift(st, &mut p_conv, &dear, -(target - need), false, true)
            } else if self.polish && need > target + BALANCE_TOLERANCE_KW {
                let cheaper: Vec<usize> = cheap.iter().copied().filter(|&i| self.unit(i).energy_cost < gf_cost).collect();
                self.shift(st, &mut p_conv, &cheaper, need - target, false, true)
            } else {
                0.0
            };
            if moved <= BALANCE_TOLERANCE_KW {
                break;
            }
        }
        let need = self.slack_need(data, st, Some(gf), p_conv)?;
        st.p[gf] = need.clamp(st.lo[gf], st.hi[gf]);
        Ok(p_conv)
    }

    fn slack_need(&self, data: &HourData, st: &HourState, gf: Option<usize>, p_conv: f64) -> Result<f64, SchedulerError> {
        let mut on = st.on.clone();
        if let Some(g) = gf {
            on[g] = false;
        }
        let inj = hour_injections(self.network, data, &st.p, &on, p_conv);
        let flow = solve_with_topology(self.network, &self.topo, &inj, REPAIR_PF_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
        // a collapsed flow leaves the slack at whatever it last saw; the
        // evaluation flags it
        Ok(if flow.slack_p_kw.is_finite() { flow.slack_p_kw } else { gf.map_or(0.0, |g| st.hi[g]) })
    }

    /// Constraint report for a decoded schedule using the cached hour data.
    pub fn evaluate(&self, schedule: &Schedule) -> Result<ViolationReport, SchedulerError> {
        schedule.check_shape(self.horizon(), self.network.dg_units.len())?;
        let mut rep = ViolationReport::default();
        for (t, data) in self.hours.iter().enumerate() {
            evaluate_hour(schedule, self.network, &self.topo, data, t, &mut rep)?;
        }
        Ok(rep)
    }
}
