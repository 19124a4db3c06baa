//! Bit-plane decomposition for importance-adaptive protection.
//!
//! A block of `m` values, each `n` bits wide, is rearranged into `n` planes of
//! `m` bits; plane `i` holds bit `i` of every value in value order. Planes in
//! the protected set go through the CRC/RS pipeline, the others bypass it.

use std::fmt;
use std::str::FromStr;

use bitvec::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::fault::{for_each_flip, substream, StreamLabel};

pub type PlaneBits = BitVec<u8, Msb0>;

pub const BF16_BITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtectionConfig {
    bits: usize,
    planes: Vec<usize>,
}

impl ProtectionConfig {
    pub fn new(bits: usize, planes: impl IntoIterator<Item = usize>) -> Result<Self> {
        if !(1..=64).contains(&bits) {
            return invalid(format!("value width {bits} outside 1..=64"));
        }
        let mut planes: Vec<usize> = planes.into_iter().collect();
        planes.sort_unstable();
        planes.dedup();
        if let Some(&p) = planes.last() {
            if p >= bits {
                return invalid(format!("plane {p} outside a {bits}-bit value"));
            }
        }
        Ok(Self { bits, planes })
    }

    pub fn full(bits: usize) -> Result<Self> {
        Self::new(bits, 0..bits)
    }

    pub fn bf16(fields: &[Bf16Field]) -> Self {
        Self::new(BF16_BITS, fields.iter().flat_map(|f| f.planes())).expect("BF16 planes are in range")
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Protected plane indices, ascending.
    pub fn planes(&self) -> &[usize] {
        &self.planes
    }

    pub fn bypass_planes(&self) -> Vec<usize> {
        (0..self.bits).filter(|p| self.planes.binary_search(p).is_err()).collect()
    }

    /// Protected-plane ratio `|S| / n`.
    pub fn gamma(&self) -> f64 {
        self.planes.len() as f64 / self.bits as f64
    }

    /// Share of decoder work relative to full protection.
    pub fn decoder_workload(&self) -> f64 {
        self.gamma()
    }

    /// Split `user_bytes` into (protected, bypass) byte counts. Exact when
    /// `user_bytes * 8` is a multiple of the value width; otherwise the
    /// protected side rounds up.
    pub fn split_bytes(&self, user_bytes: u64) -> (u64, u64) {
        let protected_bits = (user_bytes * 8 * self.planes.len() as u64).div_ceil(self.bits as u64);
        let protected = protected_bits.div_ceil(8).min(user_bytes);
        (protected, user_bytes - protected)
    }
}

/// One block in plane-major form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaneBlock {
    pub values: usize,
    /// Protected planes back to back, ascending plane index.
    pub protected: PlaneBits,
    /// Bypassed planes back to back, ascending plane index.
    pub bypass: PlaneBits,
}

impl PlaneBlock {
    pub fn total_bits(&self) -> usize {
        self.protected.len() + self.bypass.len()
    }
}

pub fn split_planes(values: &[u64], pc: &ProtectionConfig) -> Result<PlaneBlock> {
    let n = pc.bits;
    if n < 64 {
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| **v >> n != 0) {
            return invalid(format!("value {j} ({v:#x}) does not fit in {n} bits"));
        }
    }
    let fill = |planes: &[usize]| {
        let mut bits = PlaneBits::with_capacity(planes.len() * values.len());
        for &p in planes {
            bits.extend(values.iter().map(|v| v >> p & 1 == 1));
        }
        bits
    };
    Ok(PlaneBlock {
        values: values.len(),
        protected: fill(&pc.planes),
        bypass: fill(&pc.bypass_planes()),
    })
}

pub fn merge_planes(block: &PlaneBlock, pc: &ProtectionConfig) -> Result<Vec<u64>> {
    let m = block.values;
    let bypass = pc.bypass_planes();
    if block.protected.len() != pc.planes.len() * m || block.bypass.len() != bypass.len() * m {
        return invalid("plane block shape does not match the protection config");
    }
    let mut values = vec![0u64; m];
    for (stream, planes) in [(&block.protected, pc.planes.as_slice()), (&block.bypass, bypass.as_slice())] {
        for (k, &p) in planes.iter().enumerate() {
            for (j, bit) in stream[k * m..(k + 1) * m].iter().by_vals().enumerate() {
                values[j] |= (bit as u64) << p;
            }
        }
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bf16Field {
    Sign,
    Exponent,
    Mantissa,
}

impl Bf16Field {
    pub const ALL: [Bf16Field; 3] = [Bf16Field::Sign, Bf16Field::Exponent, Bf16Field::Mantissa];

    pub fn planes(self) -> std::ops::Range<usize> {
        match self {
            Bf16Field::Sign => 15..16,
            Bf16Field::Exponent => 7..15,
            Bf16Field::Mantissa => 0..7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Bf16Field::Sign => "sign",
            Bf16Field::Exponent => "exponent",
            Bf16Field::Mantissa => "mantissa",
        }
    }
}

impl fmt::Display for Bf16Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bf16Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" => Ok(Bf16Field::Sign),
            "exponent" => Ok(Bf16Field::Exponent),
            "mantissa" => Ok(Bf16Field::Mantissa),
            other => invalid(format!("unknown BF16 field {other:?}")),
        }
    }
}

pub fn bf16_field_planes(field: Bf16Field) -> Vec<usize> {
    field.planes().collect()
}

pub fn bf16_to_f32(v: u16) -> f32 {
    f32::from_bits((v as u32) << 16)
}

/// Relative errors above this count as blow-ups.
pub const BLOWUP_THRESHOLD: f64 = 1e3;

/// Smallest positive normal BF16 (same exponent range as f32).
pub const RELATIVE_ERROR_FLOOR: f64 = f32::MIN_POSITIVE as f64;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldFlipStats {
    pub flipped_bits: u64,
    pub values_changed: u64,
    /// Over values whose corrupted result is finite.
    pub max_relative_error: f64,
    /// Mean over all values, non-finite results excluded.
    pub mean_relative_error: f64,
    /// Values whose relative error exceeds `BLOWUP_THRESHOLD` or turned NaN/Inf.
    pub blowup_count: u64,
}

pub fn relative_error(before: f32, after: f32) -> f64 {
    let (x, y) = (before as f64, after as f64);
    (y - x).abs() / x.abs().max(RELATIVE_ERROR_FLOOR)
}

/// Flip each bit of `field` in every value independently with probability
/// `rate` and measure the numeric damage.
pub fn field_flip_stats(values: &[u16], field: Bf16Field, rate: f64, seed: u64) -> Result<FieldFlipStats> {
    if !(0.0..=1.0).contains(&rate) {
        return invalid(format!("flip rate {rate} outside [0, 1]"));
    }
    let planes = bf16_field_planes(field);
    let width = planes.len() as u64;
    let mut masks = vec![0u16; values.len()];
    let mut rng = substream(seed, StreamLabel::new(field as u64, 0));
    let flipped_bits = for_each_flip(&mut rng, rate, values.len() as u64 * width, |pos| {
        masks[(pos / width) as usize] ^= 1 << planes[(pos % width) as usize];
    });

    let mut stats = FieldFlipStats { flipped_bits, ..Default::default() };
    let mut finite = 0u64;
    let mut sum = 0.0;
    for (&v, &mask) in values.iter().zip(&masks) {
        if mask == 0 {
            finite += 1;
            continue;
        }
        stats.values_changed += 1;
        let after = bf16_to_f32(v ^ mask);
        if !after.is_finite() {
            stats.blowup_count += 1;
            continue;
        }
        let err = relative_error(bf16_to_f32(v), after);
        if err > BLOWUP_THRESHOLD {
            stats.blowup_count += 1;
        }
        stats.max_relative_error = stats.max_relative_error.max(err);
        sum += err;
        finite += 1;
    }
    if finite > 0 {
        stats.mean_relative_error = sum / finite as f64;
    }
    Ok(stats)
}

/// Weight-like BF16 values: N(0, 0.02) truncated to BF16, redrawn until
/// normal (no zeros or subnormals).
pub fn random_bf16_normals<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<u16> {
    let dist = Normal::new(0.0f32, 0.02).expect("valid sigma");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let bits = (dist.sample(rng).to_bits() >> 16) as u16;
        if bf16_to_f32(bits).is_normal() {
            out.push(bits);
        }
    }
    out
}
