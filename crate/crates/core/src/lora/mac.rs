//! MAC and application layers: MHDR, FHDR, FPort, payload encryption and MIC.
//!
//! Field order and byte order follow LoRaWAN 1.0 (little-endian DevAddr and
//! FCnt). The cipher and integrity code sit behind [`FrameProtection`].

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use cmac::{Cmac, Mac};
use serde::{Deserialize, Serialize};

use super::CodecError;

pub const MIC_LEN: usize = 4;
pub const MAX_FOPTS: usize = 15;
const FHDR_MIN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MType {
    JoinRequest,
    JoinAccept,
    UnconfirmedDataUp,
    UnconfirmedDataDown,
    ConfirmedDataUp,
    ConfirmedDataDown,
    Rfu,
    Proprietary,
}

impl MType {
    pub fn from_bits(b: u8) -> Self {
        match b & 7 {
            0 => MType::JoinRequest,
            1 => MType::JoinAccept,
            2 => MType::UnconfirmedDataUp,
            3 => MType::UnconfirmedDataDown,
            4 => MType::ConfirmedDataUp,
            5 => MType::ConfirmedDataDown,
            6 => MType::Rfu,
            _ => MType::Proprietary,
        }
    }

    pub fn bits(self) -> u8 {
        self as u8
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            MType::UnconfirmedDataUp | MType::ConfirmedDataUp => Some(Direction::Uplink),
            MType::UnconfirmedDataDown | MType::ConfirmedDataDown => Some(Direction::Downlink),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Uplink = 0,
    Downlink = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mhdr {
    pub mtype: MType,
    /// 3 bits
    pub rfu: u8,
    /// 2 bits
    pub major: u8,
}

impl Mhdr {
    pub fn data(direction: Direction) -> Self {
        let mtype = match direction {
            Direction::Uplink => MType::UnconfirmedDataUp,
            Direction::Downlink => MType::UnconfirmedDataDown,
        };
        Self { mtype, rfu: 0, major: 0 }
    }

    pub fn to_byte(self) -> u8 {
        self.mtype.bits() << 5 | (self.rfu & 7) << 2 | (self.major & 3)
    }

    pub fn from_byte(b: u8) -> Self {
        Self { mtype: MType::from_bits(b >> 5), rfu: (b >> 2) & 7, major: b & 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PortClass {
    MacCommand,
    Application,
    Test,
    Discard,
}

pub fn classify_port(fport: u8) -> PortClass {
    match fport {
        0 => PortClass::MacCommand,
        1..=223 => PortClass::Application,
        224 => PortClass::Test,
        _ => PortClass::Discard,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fhdr {
    pub dev_addr: u32,
    /// ADR, ACK and related flags in the upper nibble; the low nibble is
    /// replaced by the FOpts length on the wire.
    pub fctrl: u8,
    pub fcnt: u16,
    pub fopts: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppFrame {
    pub fhdr: Fhdr,
    pub fport: Option<u8>,
    pub frm_payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacFrame {
    pub mhdr: Mhdr,
    pub mac_payload: Vec<u8>,
    pub mic: [u8; MIC_LEN],
}

impl MacFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.mac_payload.len() + MIC_LEN);
        out.push(self.mhdr.to_byte());
        out.extend_from_slice(&self.mac_payload);
        out.extend_from_slice(&self.mic);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < 1 + MIC_LEN {
            return Err(CodecError::Length { expected: 1 + MIC_LEN, got: bytes.len() });
        }
        let (body, mic) = bytes.split_at(bytes.len() - MIC_LEN);
        Ok(Self {
            mhdr: Mhdr::from_byte(body[0]),
            mac_payload: body[1..].to_vec(),
            mic: [mic[0], mic[1], mic[2], mic[3]],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionKeys {
    pub nwk_s_key: [u8; 16],
    pub app_s_key: [u8; 16],
}

/// Confidentiality and integrity primitives applied to a frame.
pub trait FrameProtection {
    /// XOR `data` with a keystream; blocks are numbered from `first_block`.
    fn apply_keystream(&self, key: &[u8; 16], dir: Direction, dev_addr: u32, fcnt: u32, first_block: u8, data: &mut [u8]);
    fn mic(&self, key: &[u8; 16], dir: Direction, dev_addr: u32, fcnt: u32, msg: &[u8]) -> [u8; MIC_LEN];
}

/// AES-128 counter keystream and AES-128 CMAC truncated to 4 bytes.
#[derive(Debug, Clone, Copy, Default)]
pub struct AesCmac;

fn block(tag: u8, dir: Direction, dev_addr: u32, fcnt: u32, last: u8) -> [u8; 16] {
    let mut b = [0u8; 16];
    b[0] = tag;
    b[5] = dir as u8;
    b[6..10].copy_from_slice(&dev_addr.to_le_bytes());
    b[10..14].copy_from_slice(&fcnt.to_le_bytes());
    b[15] = last;
    b
}

impl FrameProtection for AesCmac {
    fn apply_keystream(&self, key: &[u8; 16], dir: Direction, dev_addr: u32, fcnt: u32, first_block: u8, data: &mut [u8]) {
        let cipher = Aes128::new(GenericArray::from_slice(key));
        for (k, chunk) in data.chunks_mut(16).enumerate() {
            let mut a = GenericArray::from(block(0x01, dir, dev_addr, fcnt, first_block.wrapping_add(k as u8)));
            cipher.encrypt_block(&mut a);
            for (d, s) in chunk.iter_mut().zip(a.iter()) {
                *d ^= s;
            }
        }
    }

    fn mic(&self, key: &[u8; 16], dir: Direction, dev_addr: u32, fcnt: u32, msg: &[u8]) -> [u8; MIC_LEN] {
        let b0 = block(0x49, dir, dev_addr, fcnt, msg.len() as u8);
        let mut mac = <Cmac<Aes128> as Mac>::new_from_slice(key).expect("16-byte key");
        mac.update(&b0);
        mac.update(msg);
        let tag = mac.finalize().into_bytes();
        [tag[0], tag[1], tag[2], tag[3]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    MicMismatch,
    /// FPort above 224.
    Discarded { fport: u8 },
    /// Join and proprietary frames carry no FHDR.
    NotDataFrame(MType),
    Malformed(String),
}

pub type Opened = Result<AppFrame, Rejection>;

fn encode_mac_payload(app: &AppFrame, ciphertext: &[u8], fopts: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FHDR_MIN + fopts.len() + 1 + ciphertext.len());
    out.extend_from_slice(&app.fhdr.dev_addr.to_le_bytes());
    out.push((app.fhdr.fctrl & 0xF0) | fopts.len() as u8);
    out.extend_from_slice(&app.fhdr.fcnt.to_le_bytes());
    out.extend_from_slice(fopts);
    if let Some(port) = app.fport {
        out.push(port);
        out.extend_from_slice(ciphertext);
    }
    out
}

/// Encrypts and authenticates an unconfirmed data frame.
pub fn seal(app: &AppFrame, keys: &SessionKeys, direction: Direction) -> Result<MacFrame, CodecError> {
    seal_with(&AesCmac, Mhdr::data(direction), app, keys)
}

pub fn seal_with<P: FrameProtection>(
    protection: &P,
    mhdr: Mhdr,
    app: &AppFrame,
    keys: &SessionKeys,
) -> Result<MacFrame, CodecError> {
    let dir = mhdr
        .mtype
        .direction()
        .ok_or_else(|| CodecError::Frame(format!("{:?} is not a data frame", mhdr.mtype)))?;
    let f = &app.fhdr;
    if f.fopts.len() > MAX_FOPTS {
        return Err(CodecError::Frame(format!("{} FOpts bytes exceed {MAX_FOPTS}", f.fopts.len())));
    }
    if app.fport.is_none() && !app.frm_payload.is_empty() {
        return Err(CodecError::Frame("payload without FPort".into()));
    }
    if app.fport == Some(0) && !f.fopts.is_empty() {
        return Err(CodecError::Frame("MAC commands in both FOpts and payload".into()));
    }
    let fcnt = u32::from(f.fcnt);
    let mut fopts = f.fopts.clone();
    protection.apply_keystream(&keys.nwk_s_key, dir, f.dev_addr, fcnt, 0, &mut fopts);
    let key = if app.fport == Some(0) { &keys.nwk_s_key } else { &keys.app_s_key };
    let mut ct = app.frm_payload.clone();
    protection.apply_keystream(key, dir, f.dev_addr, fcnt, 1, &mut ct);
    let mac_payload = encode_mac_payload(app, &ct, &fopts);
    let mut msg = vec![mhdr.to_byte()];
    msg.extend_from_slice(&mac_payload);
    if msg.len() > u8::MAX as usize {
        return Err(CodecError::Length { expected: u8::MAX as usize, got: msg.len() });
    }
    let mic = protection.mic(&keys.nwk_s_key, dir, f.dev_addr, fcnt, &msg);
    Ok(MacFrame { mhdr, mac_payload, mic })
}

/// Verifies the MIC, then classifies the port and decrypts.
pub fn open(frame: &MacFrame, keys: &SessionKeys) -> Opened {
    open_with(&AesCmac, frame, keys)
}

pub fn open_with<P: FrameProtection>(protection: &P, frame: &MacFrame, keys: &SessionKeys) -> Opened {
    let dir = frame.mhdr.mtype.direction().ok_or(Rejection::NotDataFrame(frame.mhdr.mtype))?;
    let p = &frame.mac_payload;
    if p.len() < FHDR_MIN {
        return Err(Rejection::Malformed(format!("MAC payload of {} bytes", p.len())));
    }
    let dev_addr = u32::from_le_bytes([p[0], p[1], p[2], p[3]]);
    let fctrl = p[4];
    let fcnt = u16::from_le_bytes([p[5], p[6]]);
    let fopts_len = (fctrl & 0x0F) as usize;
    if p.len() < FHDR_MIN + fopts_len {
        return Err(Rejection::Malformed("FOpts length exceeds frame".into()));
    }
    let mut msg = Vec::with_capacity(1 + p.len());
    msg.push(frame.mhdr.to_byte());
    msg.extend_from_slice(p);
    if protection.mic(&keys.nwk_s_key, dir, dev_addr, u32::from(fcnt), &msg) != frame.mic {
        return Err(Rejection::MicMismatch);
    }
    let rest = &p[FHDR_MIN + fopts_len..];
    let (fport, mut payload) = match rest.split_first() {
        None => (None, Vec::new()),
        Some((&port, data)) => (Some(port), data.to_vec()),
    };
    if let Some(port) = fport {
        if classify_port(port) == PortClass::Discard {
            return Err(Rejection::Discarded { fport: port });
        }
    }
    let mut fopts = p[FHDR_MIN..FHDR_MIN + fopts_len].to_vec();
    protection.apply_keystream(&keys.nwk_s_key, dir, dev_addr, u32::from(fcnt), 0, &mut fopts);
    let key = if fport == Some(0) { &keys.nwk_s_key } else { &keys.app_s_key };
    protection.apply_keystream(key, dir, dev_addr, u32::from(fcnt), 1, &mut payload);
    Ok(AppFrame { fhdr: Fhdr { dev_addr, fctrl: fctrl & 0xF0, fcnt, fopts }, fport, frm_payload: payload })
}
