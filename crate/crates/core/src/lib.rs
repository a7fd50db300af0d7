//! Co-simulation toolkit for an isolated hybrid ac/dc microgrid: scheduling,
//! power flow, smart-meter telemetry framing, forecasting, attack detection
//! and attack-impact simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod grid;
pub mod powerflow;
pub mod detector;
pub mod forecaster;
pub mod lora;
pub mod scheduler;
pub mod attack;
