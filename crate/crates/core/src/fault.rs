//! Seeded raw bit-error injection.
//!
//! Errors are transient: each access epoch draws a fresh, independent set of
//! flipped bits. Every (codeword, epoch) label owns its own ChaCha8 stream,
//! keyed by a SplitMix64 expansion of the master seed and the label, so
//! results do not depend on the order in which labels are visited.
//!
//! Flip positions are drawn by geometric skip sampling (the gap to the next
//! flipped bit), which costs O(flips) rather than O(bits).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::chunk::UNIT_BITS;
use crate::error::{invalid, Result};
use crate::layout::StoredCodeword;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultConfig {
    ber: f64,
    master_seed: u64,
}

impl FaultConfig {
    pub fn new(ber: f64, master_seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ber) {
            return invalid(format!("bit error rate {ber} outside [0, 1]"));
        }
        Ok(Self { ber, master_seed })
    }

    pub fn error_free(master_seed: u64) -> Self {
        Self { ber: 0.0, master_seed }
    }

    pub fn ber(&self) -> f64 {
        self.ber
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel {
    pub codeword: u64,
    pub epoch: u64,
}

impl StreamLabel {
    pub fn new(codeword: u64, epoch: u64) -> Self {
        Self { codeword, epoch }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream for one label.
pub fn substream(master_seed: u64, label: StreamLabel) -> ChaCha8Rng {
    let mut state = master_seed;
    let mut h = splitmix64(&mut state);
    state = h ^ label.codeword;
    h = splitmix64(&mut state);
    state = h ^ label.epoch.rotate_left(29);
    let mut seed = [0u8; 32];
    for word in seed.chunks_exact_mut(8) {
        word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Calls `flip` with each flipped position in `0..total_bits`, ascending,
/// each bit flipping independently with probability `p`.
pub fn for_each_flip<R: Rng + ?Sized>(rng: &mut R, p: f64, total_bits: u64, mut flip: impl FnMut(u64)) -> u64 {
    if p <= 0.0 || total_bits == 0 {
        return 0;
    }
    if p >= 1.0 {
        (0..total_bits).for_each(&mut flip);
        return total_bits;
    }
    let gaps = Geometric::new(p).expect("p in (0, 1)");
    let mut pos = 0u64;
    let mut count = 0u64;
    loop {
        let gap = gaps.sample(rng);
        pos = match pos.checked_add(gap) {
            Some(p) if p < total_bits => p,
            _ => break,
        };
        flip(pos);
        count += 1;
        pos += 1;
    }
    count
}

/// Flips every stored bit independently with probability `fc.ber`, drawing
/// from the label's stream. Returns the number of bits flipped.
pub fn inject(stored: &mut StoredCodeword, fc: &FaultConfig, label: StreamLabel) -> u64 {
    let mut rng = substream(fc.master_seed, label);
    let total = (stored.units.len() * UNIT_BITS) as u64;
    for_each_flip(&mut rng, fc.ber, total, |pos| {
        let pos = pos as usize;
        stored.units[pos / UNIT_BITS].flip_bit(pos % UNIT_BITS);
    })
}

/// `1 - (1 - p)^bits`, accurate for tiny `p`.
pub fn unit_error_prob(p: f64, bits: u64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return if bits == 0 { 0.0 } else { 1.0 };
    }
    -(bits as f64 * (-p).ln_1p()).exp_m1()
}
