//! Arithmetic in GF(2^16).
//!
//! Elements are 16-bit patterns; addition is XOR and multiplication is
//! polynomial multiplication reduced by x^16 + x^12 + x^3 + x + 1. Log and
//! antilog tables are built once on first use. Construction walks the powers
//! of alpha = x and panics if the cycle is shorter than 2^16 - 1, so a
//! non-primitive reduction polynomial can never produce a silently broken
//! field.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};
use std::sync::OnceLock;

/// Reduction polynomial including the x^16 term.
pub const REDUCTION_POLY: u32 = 0x1_100B;

/// Order of the multiplicative group.
pub const GROUP_ORDER: usize = (1 << 16) - 1;

pub(crate) struct Tables {
    /// `exp[i] = alpha^i`, doubled so that `exp[log a + log b]` needs no modulo.
    pub(crate) exp: Box<[u16]>,
    /// `log[a]` for a != 0; `log[0]` is unused.
    pub(crate) log: Box<[u32]>,
}

static TABLES: OnceLock<Tables> = OnceLock::new();

pub(crate) fn tables() -> &'static Tables {
    TABLES.get_or_init(build_tables)
}

fn build_tables() -> Tables {
    let mut exp = vec![0u16; 2 * GROUP_ORDER + 2].into_boxed_slice();
    let mut log = vec![0u32; 1 << 16].into_boxed_slice();
    let mut x: u32 = 1;
    for i in 0..GROUP_ORDER {
        if i > 0 && x == 1 {
            panic!("reduction polynomial {REDUCTION_POLY:#x} is not primitive: alpha has order {i}");
        }
        exp[i] = x as u16;
        log[x as usize] = i as u32;
        x <<= 1;
        if x & 0x1_0000 != 0 {
            x ^= REDUCTION_POLY;
        }
    }
    assert_eq!(x, 1, "alpha^(2^16-1) must equal 1");
    for i in GROUP_ORDER..exp.len() {
        exp[i] = exp[i - GROUP_ORDER];
    }
    Tables { exp, log }
}

/// An element of GF(2^16).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct Gf16(pub u16);

impl Gf16 {
    pub const ZERO: Gf16 = Gf16(0);
    pub const ONE: Gf16 = Gf16(1);

    /// alpha^e for any exponent (reduced mod 2^16 - 1).
    pub fn alpha_pow(e: usize) -> Gf16 {
        Gf16(tables().exp[e % GROUP_ORDER])
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Discrete log base alpha. `None` for zero.
    pub fn log(self) -> Option<u32> {
        (self.0 != 0).then(|| tables().log[self.0 as usize])
    }

    /// Multiplicative inverse. `None` for zero.
    pub fn inv(self) -> Option<Gf16> {
        let l = self.log()? as usize;
        Some(Gf16(tables().exp[(GROUP_ORDER - l) % GROUP_ORDER]))
    }

    pub fn pow(self, mut e: u64) -> Gf16 {
        if e == 0 {
            return Gf16::ONE;
        }
        match self.log() {
            None => Gf16::ZERO,
            Some(l) => {
                e %= GROUP_ORDER as u64;
                Gf16(tables().exp[((l as u64 * e) % GROUP_ORDER as u64) as usize])
            }
        }
    }

    /// Division; `None` when dividing by zero.
    pub fn checked_div(self, rhs: Gf16) -> Option<Gf16> {
        let inv = rhs.inv()?;
        Some(self * inv)
    }
}

/// Field product.
#[inline]
pub fn gf_mul(a: Gf16, b: Gf16) -> Gf16 {
    if a.0 == 0 || b.0 == 0 {
        return Gf16::ZERO;
    }
    let t = tables();
    Gf16(t.exp[(t.log[a.0 as usize] + t.log[b.0 as usize]) as usize])
}

impl Add for Gf16 {
    type Output = Gf16;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf16) -> Gf16 {
        Gf16(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf16 {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Gf16) {
        self.0 ^= rhs.0;
    }
}

impl Mul for Gf16 {
    type Output = Gf16;
    #[inline]
    fn mul(self, rhs: Gf16) -> Gf16 {
        gf_mul(self, rhs)
    }
}

impl MulAssign for Gf16 {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf16) {
        *self = gf_mul(*self, rhs);
    }
}

impl fmt::Debug for Gf16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf16({:#06x})", self.0)
    }
}

impl From<u16> for Gf16 {
    fn from(v: u16) -> Self {
        Gf16(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Shift-and-add multiplication with reduction by long division, kept
    /// independent of the log tables.
    fn mul_oracle(a: u16, b: u16) -> u16 {
        let mut prod: u32 = 0;
        for i in 0..16 {
            if b >> i & 1 == 1 {
                prod ^= (a as u32) << i;
            }
        }
        for bit in (16..32).rev() {
            if prod >> bit & 1 == 1 {
                prod ^= REDUCTION_POLY << (bit - 16);
            }
        }
        prod as u16
    }

    #[test]
    fn group_is_full_order() {
        let t = tables();
        let mut seen = vec![false; 1 << 16];
        for i in 0..GROUP_ORDER {
            let v = t.exp[i] as usize;
            assert!(!seen[v], "alpha^{i} repeats");
            seen[v] = true;
        }
        assert!(!seen[0]);
        assert_eq!(seen.iter().filter(|s| **s).count(), GROUP_ORDER);
    }

    #[test]
    fn identities() {
        for x in [0u16, 1, 2, 0x8000, 0xFFFF, 0x1234] {
            assert_eq!(gf_mul(Gf16(0), Gf16(x)), Gf16(0));
            assert_eq!(gf_mul(Gf16(1), Gf16(x)), Gf16(x));
        }
    }

    #[test]
    fn doubling_top_bit_reduces() {
        // 0x8000 * x = x^16 = x^12 + x^3 + x + 1
        assert_eq!(mul_oracle(0x0002, 0x8000), 0x100B);
        assert_eq!(gf_mul(Gf16(2), Gf16(0x8000)), Gf16(0x100B));
    }

    #[test]
    fn inverse_of_every_nonzero_element() {
        for a in 1..=u16::MAX {
            let a = Gf16(a);
            assert_eq!(a * a.inv().unwrap(), Gf16::ONE);
            assert_eq!(a.pow((1 << 16) - 2), a.inv().unwrap());
        }
        assert_eq!(Gf16::ZERO.inv(), None);
    }

    proptest! {
        #[test]
        fn table_mul_matches_oracle(a: u16, b: u16) {
            prop_assert_eq!(gf_mul(Gf16(a), Gf16(b)).0, mul_oracle(a, b));
        }

        #[test]
        fn field_axioms(a: u16, b: u16, c: u16) {
            let (a, b, c) = (Gf16(a), Gf16(b), Gf16(c));
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
        }
    }
}
