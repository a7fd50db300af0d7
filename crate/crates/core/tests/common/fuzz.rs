//! Time-boxed random and mutation fuzzing of the frame decoders.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use hmg_core::lora::{self, mac::MacFrame, PhyFrame, SpreadingFactor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub cases: u64,
    pub panics: u64,
    pub accepted: u64,
}

fn seeds() -> Vec<Vec<u8>> {
    let reading = super::golden::load("reading_sample.hex");
    let frame = super::golden::load("uplink_sample.hex");
    let phy = PhyFrame::uplink(frame.clone(), 1).unwrap().to_bytes();
    vec![reading, frame, phy, vec![0xFF; 96]]
}

fn mutate(rng: &mut ChaCha8Rng, base: &[u8]) -> Vec<u8> {
    let mut v = base.to_vec();
    match rng.gen_range(0..5) {
        0 => {
            let n = rng.gen_range(0..300);
            v = (0..n).map(|_| rng.gen()).collect();
        }
        1 => {
            for _ in 0..rng.gen_range(1..8) {
                if !v.is_empty() {
                    let i = rng.gen_range(0..v.len());
                    v[i] ^= 1 << rng.gen_range(0..8);
                }
            }
        }
        2 => {
            let n = rng.gen_range(0..=v.len());
            v.truncate(n);
        }
        3 => {
            for _ in 0..rng.gen_range(1..40) {
                v.push(rng.gen());
            }
        }
        _ => {
            if !v.is_empty() {
                let i = rng.gen_range(0..v.len());
                v[i] = *[0x00, 0xFF, 0x7F, 0x80].get(rng.gen_range(0..4)).unwrap();
            }
        }
    }
    v
}

/// One input through every decoder; true if any layer accepted it.
pub fn exercise(input: &[u8]) -> bool {
    let keys = super::golden::keys();
    let mut ok = lora::decode_reading(input).is_ok();
    if let Ok(f) = MacFrame::from_bytes(input) {
        ok |= lora::open(&f, &keys).is_ok();
    }
    ok |= PhyFrame::from_bytes(input).is_ok();
    let halves: Vec<Vec<u8>> = input.chunks(51).map(|c| c.to_vec()).collect();
    ok |= lora::reassemble(&halves, SpreadingFactor::new(10).unwrap()).is_ok();
    ok
}

pub fn run(duration: Duration, seed: u64) -> FuzzStats {
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = seeds();
    let start = Instant::now();
    let mut stats = FuzzStats::default();
    while start.elapsed() < duration {
        for _ in 0..256 {
            let base = &corpus[rng.gen_range(0..corpus.len())];
            let input = mutate(&mut rng, base);
            stats.cases += 1;
            match catch_unwind(AssertUnwindSafe(|| exercise(&input))) {
                Ok(true) => stats.accepted += 1,
                Ok(false) => {}
                Err(_) => stats.panics += 1,
            }
        }
    }
    std::panic::set_hook(prev);
    stats
}

/// Fuzz duration: one hour unless `HMG_FUZZ_SECS` overrides it.
pub fn duration_from_env(default_secs: u64) -> Duration {
    let secs = std::env::var("HMG_FUZZ_SECS").ok().and_then(|s| s.parse().ok()).unwrap_or(default_secs);
    Duration::from_secs(secs)
}
