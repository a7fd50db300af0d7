//! Splitting payloads into packets that fit high spreading factors.
//!
//! At SF 6-8 a payload travels as one unmodified packet. At SF 9-12 each
//! packet starts with a 2-byte identifier
//! `seq(10) | index(2) | total(2) | reserved(2)` followed by up to 49 data
//! bytes, so no packet exceeds 51 bytes.

use super::CodecError;

pub const MAX_PAYLOAD: usize = 96;
pub const FRAGMENT_DATA: usize = 49;
pub const FRAGMENT_HEADER: usize = 2;
pub const MAX_PACKET: usize = FRAGMENT_HEADER + FRAGMENT_DATA;
pub const MAX_SEQUENCE: u16 = 0x3FF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SpreadingFactor(u8);

impl SpreadingFactor {
    pub fn new(sf: u8) -> Result<Self, CodecError> {
        if (6..=12).contains(&sf) {
            Ok(Self(sf))
        } else {
            Err(CodecError::SpreadingFactor(sf))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn needs_fragmentation(self) -> bool {
        self.0 >= 9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentId {
    pub sequence: u16,
    pub index: u8,
    pub total: u8,
}

impl FragmentId {
    pub fn to_bytes(self) -> [u8; 2] {
        let v = (self.sequence & MAX_SEQUENCE) << 6 | u16::from(self.index & 3) << 4 | u16::from(self.total & 3) << 2;
        v.to_be_bytes()
    }

    pub fn from_bytes(b: [u8; 2]) -> Self {
        let v = u16::from_be_bytes(b);
        Self { sequence: v >> 6, index: ((v >> 4) & 3) as u8, total: ((v >> 2) & 3) as u8 }
    }
}

pub fn fragment(payload: &[u8], sf: SpreadingFactor, sequence: u16) -> Result<Vec<Vec<u8>>, CodecError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(CodecError::Length { expected: MAX_PAYLOAD, got: payload.len() });
    }
    if !sf.needs_fragmentation() {
        return Ok(vec![payload.to_vec()]);
    }
    if sequence > MAX_SEQUENCE {
        return Err(CodecError::Fragment(format!("sequence id {sequence} exceeds 10 bits")));
    }
    let total = payload.len().div_ceil(FRAGMENT_DATA).max(1);
    let packets = (0..total)
        .map(|i| {
            let id = FragmentId { sequence, index: i as u8, total: total as u8 };
            let start = i * FRAGMENT_DATA;
            let end = (start + FRAGMENT_DATA).min(payload.len());
            let mut p = Vec::with_capacity(FRAGMENT_HEADER + end - start);
            p.extend_from_slice(&id.to_bytes());
            p.extend_from_slice(&payload[start..end]);
            p
        })
        .collect();
    Ok(packets)
}

/// Inverse of [`fragment`]; packets may arrive in any order.
pub fn reassemble(packets: &[Vec<u8>], sf: SpreadingFactor) -> Result<Vec<u8>, CodecError> {
    if !sf.needs_fragmentation() {
        return match packets {
            [one] if one.len() <= MAX_PAYLOAD => Ok(one.clone()),
            [one] => Err(CodecError::Length { expected: MAX_PAYLOAD, got: one.len() }),
            [] => Err(CodecError::Incomplete { missing: vec![0] }),
            _ => Err(CodecError::Duplicate { index: 0 }),
        };
    }
    let Some(first) = packets.first() else {
        return Err(CodecError::Incomplete { missing: vec![0] });
    };
    let head = |p: &Vec<u8>| -> Result<FragmentId, CodecError> {
        if p.len() < FRAGMENT_HEADER || p.len() > MAX_PACKET {
            return Err(CodecError::Fragment(format!("packet of {} bytes", p.len())));
        }
        let id = FragmentId::from_bytes([p[0], p[1]]);
        if id.total == 0 || id.index >= id.total {
            return Err(CodecError::Fragment(format!("index {} of {}", id.index, id.total)));
        }
        Ok(id)
    };
    let lead = head(first)?;
    let mut slots: Vec<Option<&[u8]>> = vec![None; lead.total as usize];
    for p in packets {
        let id = head(p)?;
        if id.sequence != lead.sequence || id.total != lead.total {
            return Err(CodecError::MixedSequence { expected: lead.sequence, got: id.sequence });
        }
        let slot = &mut slots[id.index as usize];
        if slot.is_some() {
            return Err(CodecError::Duplicate { index: id.index });
        }
        *slot = Some(&p[FRAGMENT_HEADER..]);
    }
    let missing: Vec<u8> = slots.iter().enumerate().filter(|(_, s)| s.is_none()).map(|(i, _)| i as u8).collect();
    if !missing.is_empty() {
        return Err(CodecError::Incomplete { missing });
    }
    let last = slots.len() - 1;
    let mut out = Vec::with_capacity(MAX_PAYLOAD);
    for (i, data) in slots.into_iter().flatten().enumerate() {
        if i < last && data.len() != FRAGMENT_DATA {
            return Err(CodecError::Fragment(format!("fragment {i} carries {} bytes", data.len())));
        }
        out.extend_from_slice(data);
    }
    if out.len() > MAX_PAYLOAD {
        return Err(CodecError::Length { expected: MAX_PAYLOAD, got: out.len() });
    }
    Ok(out)
}
