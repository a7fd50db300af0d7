//! Fixed 96-byte big-endian smart-meter record.
//!
//! ```text
//! off  len  field
//!   0    4  timestamp (unix s, u32)
//!   4    2  meter id (u16)
//!   6    2  frequency (centi-Hz, u16)
//!   8    1  status
//!   9    1  reserved
//!  10   18  point block: V mV u32 | I mA u32 | P W u32 | Q var i32 | PF x1e4 u16
//!  28   16  WT block: P W u32 | Q var i32 | V mV u32 | I mA u32
//!  44   16  PV block
//!  60   16  MT block
//!  76   16  FC block
//!  92    4  converter power (W, i32)
//! ```
//!
//! A component block of sixteen 0xFF bytes means the component is absent.

use serde::{Deserialize, Serialize};

use super::CodecError;

pub const READING_LEN: usize = 96;
pub const ABSENT_SENTINEL: u32 = u32::MAX;
pub const PF_SCALE: f64 = 10_000.0;

const POINT_OFFSET: usize = 10;
const BLOCK_OFFSETS: [usize; 4] = [28, 44, 60, 76];
const CONVERTER_OFFSET: usize = 92;
const BLOCK_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    WT,
    PV,
    MT,
    FC,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 4] = [ComponentKind::WT, ComponentKind::PV, ComponentKind::MT, ComponentKind::FC];

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::WT => "wt",
            ComponentKind::PV => "pv",
            ComponentKind::MT => "mt",
            ComponentKind::FC => "fc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PointBlock {
    pub voltage_mv: u32,
    pub current_ma: u32,
    pub active_power_w: u32,
    pub reactive_power_var: i32,
    /// power factor x 10^4
    pub power_factor: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComponentBlock {
    pub active_power_w: u32,
    pub reactive_power_var: i32,
    pub voltage_mv: u32,
    pub current_ma: u32,
}

/// Meter record in wire units. `None` component blocks are absent.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MeterReading {
    pub timestamp: u32,
    pub meter_id: u16,
    /// centi-Hz
    pub frequency: u16,
    pub status: u8,
    pub reserved: u8,
    pub point: PointBlock,
    pub wt: Option<ComponentBlock>,
    pub pv: Option<ComponentBlock>,
    pub mt: Option<ComponentBlock>,
    pub fc: Option<ComponentBlock>,
    pub converter_power_w: i32,
}

/// Component measurement in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentSi {
    pub active_power_w: f64,
    pub reactive_power_var: f64,
    pub voltage_v: f64,
    pub current_a: f64,
}

/// Meter record in SI units, converted to wire units by [`MeterReading::from_si`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadingSi {
    pub timestamp: u32,
    pub meter_id: u16,
    pub frequency_hz: f64,
    pub status: u8,
    pub voltage_v: f64,
    pub current_a: f64,
    pub active_power_w: f64,
    pub reactive_power_var: f64,
    pub power_factor: f64,
    pub wt: Option<ComponentSi>,
    pub pv: Option<ComponentSi>,
    pub mt: Option<ComponentSi>,
    pub fc: Option<ComponentSi>,
    pub converter_power_w: f64,
}

fn to_u32(field: &str, v: f64, scale: f64) -> Result<u32, CodecError> {
    let x = (v * scale).round();
    if !x.is_finite() || x < 0.0 || x >= ABSENT_SENTINEL as f64 {
        return Err(CodecError::FieldRange { field: field.to_string(), value: v });
    }
    Ok(x as u32)
}

fn to_i32(field: &str, v: f64, scale: f64) -> Result<i32, CodecError> {
    let x = (v * scale).round();
    if !x.is_finite() || x < i32::MIN as f64 || x > i32::MAX as f64 {
        return Err(CodecError::FieldRange { field: field.to_string(), value: v });
    }
    Ok(x as i32)
}

impl ComponentBlock {
    fn from_si(kind: ComponentKind, c: &ComponentSi) -> Result<Self, CodecError> {
        let f = |s: &str| format!("{}.{s}", kind.name());
        Ok(Self {
            active_power_w: to_u32(&f("active_power_w"), c.active_power_w, 1.0)?,
            reactive_power_var: to_i32(&f("reactive_power_var"), c.reactive_power_var, 1.0)?,
            voltage_mv: to_u32(&f("voltage_v"), c.voltage_v, 1000.0)?,
            current_ma: to_u32(&f("current_a"), c.current_a, 1000.0)?,
        })
    }

    pub fn to_si(&self) -> ComponentSi {
        ComponentSi {
            active_power_w: self.active_power_w as f64,
            reactive_power_var: self.reactive_power_var as f64,
            voltage_v: self.voltage_mv as f64 / 1000.0,
            current_a: self.current_ma as f64 / 1000.0,
        }
    }

    fn write(&self, out: &mut [u8]) {
        out[0..4].copy_from_slice(&self.active_power_w.to_be_bytes());
        out[4..8].copy_from_slice(&self.reactive_power_var.to_be_bytes());
        out[8..12].copy_from_slice(&self.voltage_mv.to_be_bytes());
        out[12..16].copy_from_slice(&self.current_ma.to_be_bytes());
    }

    fn read(b: &[u8]) -> Self {
        Self {
            active_power_w: be_u32(&b[0..4]),
            reactive_power_var: be_u32(&b[4..8]) as i32,
            voltage_mv: be_u32(&b[8..12]),
            current_ma: be_u32(&b[12..16]),
        }
    }
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

impl MeterReading {
    /// Converts SI values to wire units; range errors name the offending field.
    pub fn from_si(si: &ReadingSi) -> Result<Self, CodecError> {
        let freq = (si.frequency_hz * 100.0).round();
        if !freq.is_finite() || !(0.0..=u16::MAX as f64).contains(&freq) {
            return Err(CodecError::FieldRange { field: "frequency_hz".into(), value: si.frequency_hz });
        }
        if !(0.0..=1.0).contains(&si.power_factor) {
            return Err(CodecError::FieldRange { field: "power_factor".into(), value: si.power_factor });
        }
        let block = |kind, c: &Option<ComponentSi>| c.as_ref().map(|c| ComponentBlock::from_si(kind, c)).transpose();
        Ok(Self {
            timestamp: si.timestamp,
            meter_id: si.meter_id,
            frequency: freq as u16,
            status: si.status,
            reserved: 0,
            point: PointBlock {
                voltage_mv: to_u32("voltage_v", si.voltage_v, 1000.0)?,
                current_ma: to_u32("current_a", si.current_a, 1000.0)?,
                active_power_w: to_u32("active_power_w", si.active_power_w, 1.0)?,
                reactive_power_var: to_i32("reactive_power_var", si.reactive_power_var, 1.0)?,
                power_factor: (si.power_factor * PF_SCALE).round() as u16,
            },
            wt: block(ComponentKind::WT, &si.wt)?,
            pv: block(ComponentKind::PV, &si.pv)?,
            mt: block(ComponentKind::MT, &si.mt)?,
            fc: block(ComponentKind::FC, &si.fc)?,
            converter_power_w: to_i32("converter_power_w", si.converter_power_w, 1.0)?,
        })
    }

    pub fn to_si(&self) -> ReadingSi {
        ReadingSi {
            timestamp: self.timestamp,
            meter_id: self.meter_id,
            frequency_hz: self.frequency as f64 / 100.0,
            status: self.status,
            voltage_v: self.point.voltage_mv as f64 / 1000.0,
            current_a: self.point.current_ma as f64 / 1000.0,
            active_power_w: self.point.active_power_w as f64,
            reactive_power_var: self.point.reactive_power_var as f64,
            power_factor: self.point.power_factor as f64 / PF_SCALE,
            wt: self.wt.map(|b| b.to_si()),
            pv: self.pv.map(|b| b.to_si()),
            mt: self.mt.map(|b| b.to_si()),
            fc: self.fc.map(|b| b.to_si()),
            converter_power_w: self.converter_power_w as f64,
        }
    }

    pub fn component(&self, kind: ComponentKind) -> Option<&ComponentBlock> {
        match kind {
            ComponentKind::WT => self.wt.as_ref(),
            ComponentKind::PV => self.pv.as_ref(),
            ComponentKind::MT => self.mt.as_ref(),
            ComponentKind::FC => self.fc.as_ref(),
        }
    }

    fn component_mut(&mut self, kind: ComponentKind) -> &mut Option<ComponentBlock> {
        match kind {
            ComponentKind::WT => &mut self.wt,
            ComponentKind::PV => &mut self.pv,
            ComponentKind::MT => &mut self.mt,
            ComponentKind::FC => &mut self.fc,
        }
    }

    /// Fields holding values no real measurement produces: a power factor
    /// above 1 or unsigned point fields saturated at the all-ones sentinel.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.point.power_factor as f64 > PF_SCALE {
            out.push("power_factor");
        }
        for (name, v) in [
            ("voltage_v", self.point.voltage_mv),
            ("current_a", self.point.current_ma),
            ("active_power_w", self.point.active_power_w),
        ] {
            if v == ABSENT_SENTINEL {
                out.push(name);
            }
        }
        if self.frequency == u16::MAX {
            out.push("frequency_hz");
        }
        out
    }
}

pub fn encode_reading(reading: &MeterReading) -> Result<[u8; READING_LEN], CodecError> {
    if reading.point.power_factor as f64 > PF_SCALE {
        return Err(CodecError::FieldRange {
            field: "power_factor".into(),
            value: reading.point.power_factor as f64 / PF_SCALE,
        });
    }
    let mut out = [0u8; READING_LEN];
    out[0..4].copy_from_slice(&reading.timestamp.to_be_bytes());
    out[4..6].copy_from_slice(&reading.meter_id.to_be_bytes());
    out[6..8].copy_from_slice(&reading.frequency.to_be_bytes());
    out[8] = reading.status;
    out[9] = reading.reserved;
    let p = &reading.point;
    let o = POINT_OFFSET;
    out[o..o + 4].copy_from_slice(&p.voltage_mv.to_be_bytes());
    out[o + 4..o + 8].copy_from_slice(&p.current_ma.to_be_bytes());
    out[o + 8..o + 12].copy_from_slice(&p.active_power_w.to_be_bytes());
    out[o + 12..o + 16].copy_from_slice(&p.reactive_power_var.to_be_bytes());
    out[o + 16..o + 18].copy_from_slice(&p.power_factor.to_be_bytes());
    for (kind, &off) in ComponentKind::ALL.iter().zip(&BLOCK_OFFSETS) {
        let slot = &mut out[off..off + BLOCK_LEN];
        match reading.component(*kind) {
            None => slot.fill(0xFF),
            Some(b) if b.active_power_w == ABSENT_SENTINEL => {
                return Err(CodecError::FieldRange {
                    field: format!("{}.active_power_w", kind.name()),
                    value: b.active_power_w as f64,
                })
            }
            Some(b) => b.write(slot),
        }
    }
    out[CONVERTER_OFFSET..].copy_from_slice(&reading.converter_power_w.to_be_bytes());
    Ok(out)
}

pub fn decode_reading(bytes: &[u8]) -> Result<MeterReading, CodecError> {
    if bytes.len() != READING_LEN {
        return Err(CodecError::Length { expected: READING_LEN, got: bytes.len() });
    }
    let o = POINT_OFFSET;
    let mut r = MeterReading {
        timestamp: be_u32(&bytes[0..4]),
        meter_id: be_u16(&bytes[4..6]),
        frequency: be_u16(&bytes[6..8]),
        status: bytes[8],
        reserved: bytes[9],
        point: PointBlock {
            voltage_mv: be_u32(&bytes[o..o + 4]),
            current_ma: be_u32(&bytes[o + 4..o + 8]),
            active_power_w: be_u32(&bytes[o + 8..o + 12]),
            reactive_power_var: be_u32(&bytes[o + 12..o + 16]) as i32,
            power_factor: be_u16(&bytes[o + 16..o + 18]),
        },
        converter_power_w: be_u32(&bytes[CONVERTER_OFFSET..]) as i32,
        ..Default::default()
    };
    for (kind, &off) in ComponentKind::ALL.iter().zip(&BLOCK_OFFSETS) {
        let slot = &bytes[off..off + BLOCK_LEN];
        let block = ComponentBlock::read(slot);
        *r.component_mut(*kind) = if block.active_power_w == ABSENT_SENTINEL {
            if slot.iter().any(|&b| b != 0xFF) {
                return Err(CodecError::MalformedSentinel { component: kind.name() });
            }
            None
        } else {
            Some(block)
        };
    }
    Ok(r)
}
