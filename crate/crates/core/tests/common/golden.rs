//! Hex-dump golden vectors under `tests/golden`.

use hmg_core::lora::SessionKeys;

pub fn load(name: &str) -> Vec<u8> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let digits: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.chars())
        .filter(|c| !c.is_whitespace())
        .collect();
    hex::decode(digits).expect("valid hex")
}

pub fn keys() -> SessionKeys {
    let mut nwk = [0u8; 16];
    nwk.copy_from_slice(&hex::decode("2b7e151628aed2a6abf7158809cf4f3c").unwrap());
    SessionKeys { nwk_s_key: nwk, app_s_key: [0x11; 16] }
}
