//! Domain types for the hybrid ac/dc microgrid and ingestion of network and
//! hourly scenario data.
//!
//! Powers are in kW, voltages in per-unit on the ac base. The dc sub-grid is
//! represented by one or more dc buses whose load is allocated from the
//! scenario's hourly dc demand.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BusId = u32;
pub type UnitId = u32;

/// Bundled modified IEEE 33-bus hybrid microgrid.
pub const IEEE33_HYBRID_JSON: &str = include_str!("../data/ieee33_hybrid.json");
/// Bundled hourly scenario (load factors, dc demand, renewable patterns).
pub const REFERENCE_SCENARIO_CSV: &str = include_str!("../data/reference_scenario.csv");

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("hour {hour} out of range (horizon {horizon})")]
    HourOutOfRange { hour: usize, horizon: usize },
    #[error("unit {0} is dispatchable; renewable output is only defined for WT/PV units")]
    NotRenewable(UnitId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("network file: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subgrid {
    Ac,
    Dc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub subgrid: Subgrid,
    pub v_min: f64,
    pub v_max: f64,
    /// kW
    pub peak_active_load: f64,
    /// kvar
    pub peak_reactive_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// per-unit
    pub resistance: f64,
    /// per-unit
    pub reactance: f64,
    /// Feeder limit in kW.
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    WT,
    PV,
    MT,
    FC,
}

impl UnitKind {
    pub fn is_renewable(self) -> bool {
        matches!(self, UnitKind::WT | UnitKind::PV)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgUnit {
    pub id: UnitId,
    pub name: String,
    pub bus: BusId,
    pub kind: UnitKind,
    pub dispatchable: bool,
    pub p_min: f64,
    pub p_max: f64,
    /// currency per kWh
    pub energy_cost: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    /// kW per hour
    pub ramp_up: f64,
    /// kW per hour
    pub ramp_down: f64,
    /// Nameplate rating, used for renewable output.
    pub capacity: f64,
    /// Grid-forming unit at the slack bus; picks up the ac mismatch.
    #[serde(default)]
    pub grid_forming: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Converter {
    /// Negative values mean power flows from the dc to the ac sub-grid.
    pub p_min: f64,
    pub p_max: f64,
    pub ac_bus: BusId,
    pub dc_bus: BusId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default = "default_base_kv_ac")]
    pub base_kv_ac: f64,
    #[serde(default = "default_base_kv_dc")]
    pub base_kv_dc: f64,
    pub slack_bus: BusId,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub dg_units: Vec<DgUnit>,
    pub converter: Option<Converter>,
}

fn default_base_mva() -> f64 {
    1.0
}
fn default_base_kv_ac() -> f64 {
    12.66
}
fn default_base_kv_dc() -> f64 {
    1.0
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let net: Network = serde_json::from_str(text).map_err(|e| GridError::Json(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn ieee33_hybrid() -> Self {
        Self::from_json(IEEE33_HYBRID_JSON).expect("bundled network is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(GridError::Validation(format!("duplicate bus {}", b.id)));
            }
            if !(b.v_min > 0.0 && b.v_min < b.v_max) {
                return Err(GridError::Validation(format!("bus {}: need 0 < v_min < v_max", b.id)));
            }
            if b.peak_active_load < 0.0 || b.peak_reactive_load < 0.0 {
                return Err(GridError::Validation(format!("bus {}: negative peak load", b.id)));
            }
            if b.subgrid == Subgrid::Dc && b.peak_reactive_load != 0.0 {
                return Err(GridError::Validation(format!("dc bus {} carries reactive load", b.id)));
            }
        }
        match self.bus(self.slack_bus) {
            Some(b) if b.subgrid == Subgrid::Ac => {}
            _ => return Err(GridError::Validation("slack bus must be an ac bus".into())),
        }
        for l in &self.lines {
            for end in [l.from_bus, l.to_bus] {
                match self.bus(end) {
                    Some(b) if b.subgrid == Subgrid::Ac => {}
                    Some(_) => return Err(GridError::Validation(format!("line touches dc bus {end}"))),
                    None => return Err(GridError::UnknownBus(end)),
                }
            }
            if l.resistance < 0.0 || l.capacity <= 0.0 {
                return Err(GridError::Validation(format!(
                    "line {}-{}: need resistance >= 0 and capacity > 0",
                    l.from_bus, l.to_bus
                )));
            }
        }
        let mut unit_ids = HashSet::new();
        let mut forming = 0;
        for u in &self.dg_units {
            if !unit_ids.insert(u.id) {
                return Err(GridError::Validation(format!("duplicate unit {}", u.id)));
            }
            if self.bus(u.bus).is_none() {
                return Err(GridError::UnknownBus(u.bus));
            }
            if !(0.0 <= u.p_min && u.p_min <= u.p_max) {
                return Err(GridError::Validation(format!("unit {}: need 0 <= p_min <= p_max", u.name)));
            }
            if u.kind.is_renewable() && u.dispatchable {
                return Err(GridError::Validation(format!("unit {}: WT/PV cannot be dispatchable", u.name)));
            }
            if u.dispatchable && (u.ramp_up <= 0.0 || u.ramp_down <= 0.0) {
                return Err(GridError::Validation(format!("unit {}: ramp rates must be positive", u.name)));
            }
            if u.grid_forming {
                forming += 1;
                if !u.dispatchable || u.bus != self.slack_bus {
                    return Err(GridError::Validation(format!(
                        "unit {}: grid-forming unit must be dispatchable and sit at the slack bus",
                        u.name
                    )));
                }
            }
        }
        if forming > 1 {
            return Err(GridError::Validation("at most one grid-forming unit".into()));
        }
        if let Some(c) = &self.converter {
            if !(c.p_min < 0.0 && 0.0 < c.p_max) {
                return Err(GridError::Validation("converter must be bidirectional (p_min < 0 < p_max)".into()));
            }
            match (self.bus(c.ac_bus), self.bus(c.dc_bus)) {
                (Some(a), Some(d)) if a.subgrid == Subgrid::Ac && d.subgrid == Subgrid::Dc => {}
                _ => return Err(GridError::Validation("converter must join an ac bus to a dc bus".into())),
            }
        }
        self.check_radial()
    }

    /// The ac line set must be a spanning tree over the ac buses.
    fn check_radial(&self) -> Result<(), GridError> {
        let ac: Vec<BusId> = self.ac_buses().map(|b| b.id).collect();
        if self.lines.len() + 1 != ac.len() {
            return Err(GridError::Validation(format!(
                "radial network needs {} lines, found {}",
                ac.len().saturating_sub(1),
                self.lines.len()
            )));
        }
        let mut adj: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
        for l in &self.lines {
            adj.entry(l.from_bus).or_default().push(l.to_bus);
            adj.entry(l.to_bus).or_default().push(l.from_bus);
        }
        let mut seen = HashSet::from([self.slack_bus]);
        let mut stack = vec![self.slack_bus];
        while let Some(b) = stack.pop() {
            for &n in adj.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        if seen.len() != ac.len() {
            return Err(GridError::Validation("ac network is not connected".into()));
        }
        Ok(())
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn ac_buses(&self) -> impl Iterator<Item = &Bus> {
        self.buses.iter().filter(|b| b.subgrid == Subgrid::Ac)
    }

    pub fn dc_buses(&self) -> impl Iterator<Item = &Bus> {
        self.buses.iter().filter(|b| b.subgrid == Subgrid::Dc)
    }

    pub fn unit(&self, id: UnitId) -> Option<&DgUnit> {
        self.dg_units.iter().find(|u| u.id == id)
    }

    pub fn unit_subgrid(&self, unit: &DgUnit) -> Subgrid {
        self.bus(unit.bus).map(|b| b.subgrid).unwrap_or(Subgrid::Ac)
    }

    pub fn grid_forming_index(&self) -> Option<usize> {
        self.dg_units.iter().position(|u| u.grid_forming)
    }

    /// Total ac and dc demand (kW) at `hour`.
    pub fn total_demand(&self, hour: usize, scenario: &Scenario) -> Result<(f64, f64), GridError> {
        let mut ac = 0.0;
        let mut dc = 0.0;
        for b in &self.buses {
            let (p, _) = bus_load(self, b, hour, scenario)?;
            match b.subgrid {
                Subgrid::Ac => ac += p,
                Subgrid::Dc => dc += p,
            }
        }
        Ok((ac, dc))
    }
}

/// How the hourly spinning-reserve requirement is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReservePolicy {
    /// Fraction of the hour's total (ac + dc) demand.
    FractionOfDemand(f64),
    /// Explicit per-hour requirement in kW.
    Fixed(Vec<f64>),
}

impl Default for ReservePolicy {
    fn default() -> Self {
        ReservePolicy::FractionOfDemand(0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ac_load_factor: Vec<f64>,
    /// kW
    pub dc_load_demand: Vec<f64>,
    pub wt_pattern: Vec<f64>,
    pub pv_pattern: Vec<f64>,
    pub reserve: ReservePolicy,
    /// currency per kWh of energy not supplied
    pub ens_penalty: f64,
}

impl Scenario {
    pub fn new(
        ac_load_factor: Vec<f64>,
        dc_load_demand: Vec<f64>,
        wt_pattern: Vec<f64>,
        pv_pattern: Vec<f64>,
    ) -> Result<Self, GridError> {
        let s = Scenario {
            ac_load_factor,
            dc_load_demand,
            wt_pattern,
            pv_pattern,
            reserve: ReservePolicy::default(),
            ens_penalty: 4.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn reference() -> Self {
        load_scenario(REFERENCE_SCENARIO_CSV).expect("bundled scenario is valid")
    }

    pub fn horizon(&self) -> usize {
        self.ac_load_factor.len()
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let n = self.horizon();
        if n == 0 {
            return Err(GridError::Validation("empty horizon".into()));
        }
        if self.dc_load_demand.len() != n || self.wt_pattern.len() != n || self.pv_pattern.len() != n {
            return Err(GridError::Validation("series lengths differ from the horizon".into()));
        }
        if let ReservePolicy::Fixed(r) = &self.reserve {
            if r.len() != n {
                return Err(GridError::Validation("reserve series length differs from the horizon".into()));
            }
        }
        for t in 0..n {
            if !(self.ac_load_factor[t] > 0.0) {
                return Err(GridError::Validation(format!("hour {}: load factor must be > 0", t + 1)));
            }
            if !(self.dc_load_demand[t] >= 0.0) {
                return Err(GridError::Validation(format!("hour {}: negative dc demand", t + 1)));
            }
            for (name, v) in [("wt", self.wt_pattern[t]), ("pv", self.pv_pattern[t])] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(GridError::Validation(format!("hour {}: {name} pattern {v} outside [0,1]", t + 1)));
                }
            }
        }
        Ok(())
    }

    fn check_hour(&self, hour: usize) -> Result<(), GridError> {
        if hour >= self.horizon() {
            return Err(GridError::HourOutOfRange { hour, horizon: self.horizon() });
        }
        Ok(())
    }

    pub fn reserve_requirement(&self, hour: usize, total_demand: f64) -> f64 {
        match &self.reserve {
            ReservePolicy::FractionOfDemand(f) => f * total_demand,
            ReservePolicy::Fixed(r) => r[hour],
        }
    }
}

/// Parse `hour,ac_load_factor,dc_load_kw,wt_pattern,pv_pattern` CSV text.
/// Row indices in errors are 1-based data rows (header excluded).
pub fn load_scenario(source: &str) -> Result<Scenario, GridError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let mut lf = Vec::new();
    let mut dc = Vec::new();
    let mut wt = Vec::new();
    let mut pv = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| GridError::Parse { row, msg: e.to_string() })?;
        if rec.len() != 5 {
            return Err(GridError::Parse { row, msg: format!("expected 5 columns, found {}", rec.len()) });
        }
        let num = |k: usize| -> Result<f64, GridError> {
            rec[k]
                .parse::<f64>()
                .map_err(|e| GridError::Parse { row, msg: format!("column {}: {e}", k + 1) })
        };
        let _hour = num(0)?;
        lf.push(num(1)?);
        dc.push(num(2)?);
        let w = num(3)?;
        let p = num(4)?;
        for (name, v) in [("wt_pattern", w), ("pv_pattern", p)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::Validation(format!("row {row}: {name} {v} outside [0,1]")));
            }
        }
        wt.push(w);
        pv.push(p);
    }
    Scenario::new(lf, dc, wt, pv)
}

/// Output (kW) of a non-dispatchable unit: nameplate capacity times the
/// hour's normalized pattern.
pub fn res_output(unit: &DgUnit, hour: usize, scenario: &Scenario) -> Result<f64, GridError> {
    if unit.dispatchable || !unit.kind.is_renewable() {
        return Err(GridError::NotRenewable(unit.id));
    }
    scenario.check_hour(hour)?;
    let pattern = match unit.kind {
        UnitKind::WT => scenario.wt_pattern[hour],
        UnitKind::PV => scenario.pv_pattern[hour],
        _ => unreachable!(),
    };
    Ok(unit.capacity * pattern)
}

/// Active and reactive demand (kW, kvar) of `bus` at `hour`.
///
/// ac buses scale their peak by the hourly load factor. dc buses share the
/// hourly dc demand in proportion to their peak active load (equally when
/// every dc peak is zero).
pub fn bus_load(network: &Network, bus: &Bus, hour: usize, scenario: &Scenario) -> Result<(f64, f64), GridError> {
    scenario.check_hour(hour)?;
    match bus.subgrid {
        Subgrid::Ac => {
            let f = scenario.ac_load_factor[hour];
            Ok((bus.peak_active_load * f, bus.peak_reactive_load * f))
        }
        Subgrid::Dc => {
            let dc: Vec<&Bus> = network.dc_buses().collect();
            let total: f64 = dc.iter().map(|b| b.peak_active_load).sum();
            let share = if total > 0.0 {
                bus.peak_active_load / total
            } else {
                1.0 / dc.len().max(1) as f64
            };
            Ok((scenario.dc_load_demand[hour] * share, 0.0))
        }
    }
}
