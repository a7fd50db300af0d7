//! Two-unit toy instance and an exhaustive dynamic-programming oracle.

use hmg_core::grid::{Network, Scenario};

pub const LOAD_PEAK_KW: f64 = 900.0;

pub const LOAD_FACTOR: [f64; 24] = [
    0.25, 0.22, 0.22, 0.25, 0.35, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.6, 0.45,
    0.3, 0.25, 0.35, 0.25,
];

pub struct ToyUnit {
    pub cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub startup: f64,
    pub shutdown: f64,
}

/// Cheap unit that the optimizer commits.
pub const CHEAP: ToyUnit = ToyUnit { cost: 0.3, p_min: 150.0, p_max: 400.0, startup: 50.0, shutdown: 20.0 };
/// Expensive grid-forming unit, always on.
pub const DEAR: ToyUnit = ToyUnit { cost: 0.6, p_min: 100.0, p_max: 1000.0, startup: 60.0, shutdown: 25.0 };

/// Both units and the whole load sit at the slack bus, so the flow is
/// lossless and the instance reduces to a commitment problem.
pub fn toy_network() -> Network {
    let json = format!(
        r#"{{
  "name": "toy",
  "slack_bus": 1,
  "buses": [
    {{"id": 1, "subgrid": "ac", "v_min": 0.9, "v_max": 1.1, "peak_active_load": {LOAD_PEAK_KW}, "peak_reactive_load": 0.0}},
    {{"id": 2, "subgrid": "ac", "v_min": 0.9, "v_max": 1.1, "peak_active_load": 0.0, "peak_reactive_load": 0.0}}
  ],
  "lines": [{{"from_bus": 1, "to_bus": 2, "resistance": 0.01, "reactance": 0.01, "capacity": 5000.0}}],
  "dg_units": [
    {unit_a},
    {unit_b}
  ],
  "converter": null
}}"#,
        unit_a = unit_json(1, "A", &CHEAP, false),
        unit_b = unit_json(2, "B", &DEAR, true),
    );
    Network::from_json(&json).expect("toy network is valid")
}

fn unit_json(id: u32, name: &str, u: &ToyUnit, grid_forming: bool) -> String {
    format!(
        r#"{{"id": {id}, "name": "{name}", "bus": 1, "kind": "MT", "dispatchable": true, "p_min": {}, "p_max": {},
      "energy_cost": {}, "startup_cost": {}, "shutdown_cost": {}, "ramp_up": {}, "ramp_down": {}, "capacity": {},
      "grid_forming": {grid_forming}}}"#,
        u.p_min, u.p_max, u.cost, u.startup, u.shutdown, u.p_max, u.p_max, u.p_max
    )
}

pub fn toy_scenario() -> Scenario {
    Scenario::new(LOAD_FACTOR.to_vec(), vec![0.0; 24], vec![0.0; 24], vec![0.0; 24]).expect("toy scenario is valid")
}

/// Cheapest cost for one hour with the cheap unit on or off.
fn hour_cost(load: f64, cheap_on: bool) -> Option<f64> {
    if !cheap_on {
        return (DEAR.p_min..=DEAR.p_max).contains(&load).then_some(DEAR.cost * load);
    }
    if load < CHEAP.p_min + DEAR.p_min {
        return None;
    }
    let a = CHEAP.p_max.min(load - DEAR.p_min);
    let b = load - a;
    (b <= DEAR.p_max).then_some(CHEAP.cost * a + DEAR.cost * b)
}

/// Optimal total cost over the horizon with both units initially on.
pub fn optimum() -> f64 {
    // best[s]: cheapest cost so far ending with the cheap unit in state s
    let mut best = [f64::INFINITY, 0.0];
    for lf in LOAD_FACTOR {
        let load = lf * LOAD_PEAK_KW;
        let mut next = [f64::INFINITY; 2];
        for (to, slot) in next.iter_mut().enumerate() {
            let Some(h) = hour_cost(load, to == 1) else { continue };
            for (from, &c) in best.iter().enumerate() {
                let switch = match (from, to) {
                    (0, 1) => CHEAP.startup,
                    (1, 0) => CHEAP.shutdown,
                    _ => 0.0,
                };
                *slot = slot.min(c + switch + h);
            }
        }
        best = next;
    }
    best[0].min(best[1])
}
