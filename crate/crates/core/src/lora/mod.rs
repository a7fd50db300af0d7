//! LoRa telemetry framing: the 96-byte meter record, fragmentation for high
//! spreading factors, MAC sealing and the PHY envelope.

pub mod fragment;
pub mod mac;
pub mod phy;
pub mod reading;

use thiserror::Error;

pub use fragment::{fragment, reassemble, SpreadingFactor};
pub use mac::{classify_port, open, seal, AppFrame, Direction, Fhdr, MacFrame, Mhdr, PortClass, Rejection, SessionKeys};
pub use phy::PhyFrame;
pub use reading::{decode_reading, encode_reading, ComponentBlock, MeterReading, PointBlock, READING_LEN};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CodecError {
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("field {field} out of range: {value}")]
    FieldRange { field: String, value: f64 },
    #[error("{component} block has the absent sentinel in its power field but other bytes set")]
    MalformedSentinel { component: &'static str },
    #[error("spreading factor {0} outside 6..=12")]
    SpreadingFactor(u8),
    #[error("incomplete payload, missing fragment(s) {missing:?}")]
    Incomplete { missing: Vec<u8> },
    #[error("fragment from sequence {got} mixed into sequence {expected}")]
    MixedSequence { expected: u16, got: u16 },
    #[error("fragment {index} received twice")]
    Duplicate { index: u8 },
    #[error("bad fragment: {0}")]
    Fragment(String),
    #[error("frame: {0}")]
    Frame(String),
    #[error("{0} checksum mismatch")]
    Checksum(&'static str),
}
