//! Structural model of the radio frame: preamble, 20-bit PHDR, payload and
//! optional PHY CRC. Modulation is not modeled.
//!
//! PHDR bit layout (most significant first): payload length (8), coding rate
//! (3), CRC-present flag (1), reserved (4), header checksum (4). On the wire it
//! occupies three bytes with the final nibble zero.

use crc::{Crc, CRC_16_IBM_3740, CRC_4_G_704};
use serde::{Deserialize, Serialize};

use super::CodecError;

const HEADER_CRC: Crc<u8> = Crc::<u8>::new(&CRC_4_G_704);
const PAYLOAD_CRC: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub const PHDR_BYTES: usize = 3;
pub const DEFAULT_PREAMBLE: u16 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phdr {
    pub payload_length: u8,
    /// 1..=4 for rates 4/5 .. 4/8
    pub coding_rate: u8,
    pub crc_present: bool,
    pub checksum: u8,
}

impl Phdr {
    fn first_bits(&self) -> [u8; 2] {
        [self.payload_length, (self.coding_rate & 7) << 5 | u8::from(self.crc_present) << 4]
    }

    pub fn new(payload_length: u8, coding_rate: u8, crc_present: bool) -> Self {
        let mut h = Self { payload_length, coding_rate, crc_present, checksum: 0 };
        h.checksum = HEADER_CRC.checksum(&h.first_bits()) & 0x0F;
        h
    }

    pub fn to_bytes(&self) -> [u8; PHDR_BYTES] {
        let [a, b] = self.first_bits();
        [a, b, (self.checksum & 0x0F) << 4]
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CodecError> {
        if b.len() < PHDR_BYTES {
            return Err(CodecError::Length { expected: PHDR_BYTES, got: b.len() });
        }
        let h = Self::new(b[0], b[1] >> 5, b[1] & 0x10 != 0);
        if b[1] & 0x0F != 0 || b[2] & 0x0F != 0 {
            return Err(CodecError::Frame("reserved PHDR bits set".into()));
        }
        if b[2] >> 4 != h.checksum {
            return Err(CodecError::Checksum("PHDR"));
        }
        if !(1..=4).contains(&h.coding_rate) {
            return Err(CodecError::Frame(format!("coding rate code {}", h.coding_rate)));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhyFrame {
    pub preamble_symbols: u16,
    pub phdr: Phdr,
    pub payload: Vec<u8>,
    pub phy_crc: Option<u16>,
}

impl PhyFrame {
    /// Uplink frames carry a payload CRC.
    pub fn uplink(payload: Vec<u8>, coding_rate: u8) -> Result<Self, CodecError> {
        Self::build(payload, coding_rate, true)
    }

    /// Downlink frames carry no payload CRC.
    pub fn downlink(payload: Vec<u8>, coding_rate: u8) -> Result<Self, CodecError> {
        Self::build(payload, coding_rate, false)
    }

    fn build(payload: Vec<u8>, coding_rate: u8, crc: bool) -> Result<Self, CodecError> {
        let len = u8::try_from(payload.len()).map_err(|_| CodecError::Length { expected: 255, got: payload.len() })?;
        if !(1..=4).contains(&coding_rate) {
            return Err(CodecError::Frame(format!("coding rate code {coding_rate}")));
        }
        let phy_crc = crc.then(|| PAYLOAD_CRC.checksum(&payload));
        Ok(Self { preamble_symbols: DEFAULT_PREAMBLE, phdr: Phdr::new(len, coding_rate, crc), payload, phy_crc })
    }

    /// PHDR, payload, then the big-endian CRC when present. The preamble is
    /// not part of the byte stream.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PHDR_BYTES + self.payload.len() + 2);
        out.extend_from_slice(&self.phdr.to_bytes());
        out.extend_from_slice(&self.payload);
        if let Some(c) = self.phy_crc {
            out.extend_from_slice(&c.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let phdr = Phdr::from_bytes(bytes)?;
        let n = phdr.payload_length as usize;
        let need = PHDR_BYTES + n + if phdr.crc_present { 2 } else { 0 };
        if bytes.len() != need {
            return Err(CodecError::Length { expected: need, got: bytes.len() });
        }
        let payload = bytes[PHDR_BYTES..PHDR_BYTES + n].to_vec();
        let phy_crc = if phdr.crc_present {
            let c = u16::from_be_bytes([bytes[need - 2], bytes[need - 1]]);
            if c != PAYLOAD_CRC.checksum(&payload) {
                return Err(CodecError::Checksum("PHY payload"));
            }
            Some(c)
        } else {
            None
        };
        Ok(Self { preamble_symbols: DEFAULT_PREAMBLE, phdr, payload, phy_crc })
    }
}
