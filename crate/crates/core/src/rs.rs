//! Systematic shortened Reed-Solomon code over GF(2^16).
//!
//! A codeword is `data ‖ parity` with symbol `i` of the word being the
//! coefficient of `x^(n-1-i)`. The generator is
//! `g(x) = (x - a^1)(x - a^2)...(x - a^q)` and parity is
//! `data(x) * x^q mod g(x)`.
//!
//! Decoding is syndrome computation, Berlekamp-Massey, a Chien search
//! restricted to the `n` positions of the shortened code, and Forney's
//! formula. A word with all-zero syndromes returns before any locator work.

use std::cell::Cell;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::gf::{tables, Gf16, GROUP_ORDER};

/// Longest supported codeword, in symbols.
pub const MAX_CODEWORD_SYMS: usize = 65_535;

thread_local! {
    static LOCATOR_RUNS: Cell<u64> = const { Cell::new(0) };
}

/// Number of error-locator computations performed on the calling thread.
pub fn locator_runs() -> u64 {
    LOCATOR_RUNS.with(|c| c.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RsGeometry {
    data_syms: usize,
    parity_syms: usize,
}

impl RsGeometry {
    pub fn new(data_syms: usize, parity_syms: usize) -> Result<Self> {
        if data_syms == 0 || parity_syms == 0 {
            return invalid("RS geometry needs at least one data and one parity symbol");
        }
        if data_syms + parity_syms > MAX_CODEWORD_SYMS {
            return invalid(format!(
                "RS codeword of {} symbols exceeds the GF(2^16) limit of {MAX_CODEWORD_SYMS}",
                data_syms + parity_syms
            ));
        }
        Ok(Self { data_syms, parity_syms })
    }

    pub fn data_syms(&self) -> usize {
        self.data_syms
    }

    pub fn parity_syms(&self) -> usize {
        self.parity_syms
    }

    /// Codeword length in symbols.
    pub fn len(&self) -> usize {
        self.data_syms + self.parity_syms
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Correctable symbol errors.
    pub fn t(&self) -> usize {
        self.parity_syms / 2
    }
}

/// Sparse view of a data vector: listed positions carry values, the rest are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseDataVector {
    len: usize,
    entries: Vec<(usize, Gf16)>,
}

impl SparseDataVector {
    pub fn new(len: usize, entries: Vec<(usize, Gf16)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return invalid("sparse positions must be strictly increasing");
            }
        }
        if let Some(&(last, _)) = entries.last() {
            if last >= len {
                return invalid(format!("sparse position {last} out of range for length {len}"));
            }
        }
        Ok(Self { len, entries })
    }

    /// Contiguous run of symbols starting at `offset`.
    pub fn from_run(len: usize, offset: usize, values: &[Gf16]) -> Result<Self> {
        let entries = values.iter().enumerate().map(|(i, &v)| (offset + i, v)).collect();
        Self::new(len, entries)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[(usize, Gf16)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<Gf16> {
        let mut v = vec![Gf16::ZERO; self.len];
        for &(p, x) in &self.entries {
            v[p] = x;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    /// Corrected data symbols.
    pub data: Vec<Gf16>,
    /// Number of symbol errors corrected, data and parity positions alike.
    pub error_count: usize,
    /// Codeword indices that were corrected, ascending.
    pub error_positions: Vec<usize>,
}

/// An RS code instance for one geometry. Cheap to share; tables are read-only.
#[derive(Debug)]
pub struct RsCode {
    geom: RsGeometry,
    /// Generator coefficients indexed by degree, monic (`gen[q] == 1`).
    gen_log: Vec<u32>,
    gen: Vec<Gf16>,
    /// Parity columns for unit data symbols, built on first sparse update.
    columns: OnceLock<Vec<u16>>,
}

impl Clone for RsCode {
    fn clone(&self) -> Self {
        Self {
            geom: self.geom,
            gen_log: self.gen_log.clone(),
            gen: self.gen.clone(),
            columns: OnceLock::new(),
        }
    }
}

impl RsCode {
    pub fn new(geom: RsGeometry) -> Self {
        let q = geom.parity_syms;
        let mut gen = vec![Gf16::ONE];
        for i in 1..=q {
            let root = Gf16::alpha_pow(i);
            let mut next = vec![Gf16::ZERO; gen.len() + 1];
            for (deg, &c) in gen.iter().enumerate() {
                next[deg + 1] += c;
                next[deg] += c * root;
            }
            gen = next;
        }
        let gen_log = gen.iter().map(|c| c.log().unwrap_or(u32::MAX)).collect();
        Self { geom, gen_log, gen, columns: OnceLock::new() }
    }

    pub fn geometry(&self) -> RsGeometry {
        self.geom
    }

    /// Generator polynomial coefficients by ascending degree.
    pub fn generator(&self) -> &[Gf16] {
        &self.gen
    }

    /// Systematic parity for `data`.
    pub fn encode(&self, data: &[Gf16]) -> Result<Vec<Gf16>> {
        if data.len() != self.geom.data_syms {
            return invalid(format!(
                "expected {} data symbols, got {}",
                self.geom.data_syms,
                data.len()
            ));
        }
        Ok(self.encode_unchecked(data))
    }

    fn encode_unchecked(&self, data: &[Gf16]) -> Vec<Gf16> {
        let q = self.geom.parity_syms;
        let exp = &tables().exp;
        let log = &tables().log;
        // reg[j] holds the coefficient of x^j of the running remainder
        let mut reg = vec![0u16; q];
        for &m in data {
            let fb = m.0 ^ reg[q - 1];
            if fb == 0 {
                reg.copy_within(0..q - 1, 1);
                reg[0] = 0;
                continue;
            }
            let lf = log[fb as usize];
            for j in (1..q).rev() {
                let gl = self.gen_log[j];
                let term = if gl == u32::MAX { 0 } else { exp[(lf + gl) as usize] };
                reg[j] = reg[j - 1] ^ term;
            }
            reg[0] = exp[(lf + self.gen_log[0]) as usize];
        }
        reg.iter().rev().map(|&v| Gf16(v)).collect()
    }

    /// Parity column of each data position: `x^(q + d - 1 - j) mod g(x)`,
    /// stored row-major as `d` rows of `q` parity symbols.
    fn columns(&self) -> &[u16] {
        self.columns.get_or_init(|| {
            let d = self.geom.data_syms;
            let q = self.geom.parity_syms;
            let mut cols = vec![0u16; d * q];
            // rem[j] = coefficient of x^j, starting from x^q mod g = g - x^q
            let mut rem: Vec<Gf16> = self.gen[..q].to_vec();
            for j in (0..d).rev() {
                let row = &mut cols[j * q..(j + 1) * q];
                for (i, slot) in row.iter_mut().enumerate() {
                    *slot = rem[q - 1 - i].0;
                }
                // multiply by x and reduce
                let top = rem[q - 1];
                for k in (1..q).rev() {
                    rem[k] = rem[k - 1] + top * self.gen[k];
                }
                rem[0] = top * self.gen[0];
            }
            cols
        })
    }

    /// `RS(new) ⊕ RS(old)` for two sparse vectors over the same positions,
    /// evaluated from the touched positions' parity columns only.
    pub fn parity_delta(&self, old: &SparseDataVector, new: &SparseDataVector) -> Result<Vec<Gf16>> {
        let d = self.geom.data_syms;
        if old.len != d || new.len != d {
            return invalid(format!("sparse vectors must have length {d}"));
        }
        if old.entries.len() != new.entries.len()
            || old.entries.iter().zip(&new.entries).any(|(a, b)| a.0 != b.0)
        {
            return invalid("old and new sparse vectors touch different positions");
        }
        let q = self.geom.parity_syms;
        let cols = self.columns();
        let exp = &tables().exp;
        let log = &tables().log;
        let mut delta = vec![0u16; q];
        for (&(pos, a), &(_, b)) in old.entries.iter().zip(&new.entries) {
            let diff = a.0 ^ b.0;
            if diff == 0 {
                continue;
            }
            let ld = log[diff as usize];
            for (acc, &c) in delta.iter_mut().zip(&cols[pos * q..(pos + 1) * q]) {
                if c != 0 {
                    *acc ^= exp[(ld + log[c as usize]) as usize];
                }
            }
        }
        Ok(delta.into_iter().map(Gf16).collect())
    }

    /// Syndromes `S_j = r(a^j)` for `j = 1..=q`.
    pub fn syndromes(&self, received: &[Gf16]) -> Vec<Gf16> {
        let exp = &tables().exp;
        let log = &tables().log;
        (1..=self.geom.parity_syms)
            .map(|j| {
                let mut s: u16 = 0;
                for &r in received {
                    if s != 0 {
                        s = exp[log[s as usize] as usize + j];
                    }
                    s ^= r.0;
                }
                Gf16(s)
            })
            .collect()
    }

    /// Bounded-distance decode of a full received word (`data ‖ parity`).
    pub fn decode(&self, received: &[Gf16]) -> Result<DecodeOutcome> {
        let n = self.geom.len();
        let d = self.geom.data_syms;
        if received.len() != n {
            return invalid(format!("expected {n} received symbols, got {}", received.len()));
        }
        let synd = self.syndromes(received);
        if synd.iter().all(|s| s.is_zero()) {
            return Ok(DecodeOutcome {
                data: received[..d].to_vec(),
                error_count: 0,
                error_positions: Vec::new(),
            });
        }

        LOCATOR_RUNS.with(|c| c.set(c.get() + 1));
        let locator = berlekamp_massey(&synd);
        let nerr = locator.len() - 1;
        if nerr > self.geom.t() {
            return Err(Error::DecodeFailure);
        }
        let positions = chien_search(&locator, n);
        if positions.len() != nerr {
            return Err(Error::DecodeFailure);
        }

        // omega = S(x) * lambda(x) mod x^q
        let q = self.geom.parity_syms;
        let mut omega = vec![Gf16::ZERO; q];
        for (i, &s) in synd.iter().enumerate() {
            for (k, &l) in locator.iter().enumerate() {
                if i + k >= q {
                    break;
                }
                omega[i + k] += s * l;
            }
        }

        let mut corrected = received.to_vec();
        for &pos in &positions {
            let deg = n - 1 - pos;
            let x_inv = Gf16::alpha_pow(GROUP_ORDER - deg % GROUP_ORDER);
            let num = eval(&omega, x_inv);
            // formal derivative keeps odd-degree terms only
            let mut den = Gf16::ZERO;
            let mut xp = Gf16::ONE;
            let x_inv_sq = x_inv * x_inv;
            for k in (1..locator.len()).step_by(2) {
                den += locator[k] * xp;
                xp *= x_inv_sq;
            }
            let mag = num.checked_div(den).ok_or(Error::DecodeFailure)?;
            if mag.is_zero() {
                return Err(Error::DecodeFailure);
            }
            corrected[pos] += mag;
        }
        corrected.truncate(d);
        Ok(DecodeOutcome { data: corrected, error_count: nerr, error_positions: positions })
    }
}

fn eval(poly: &[Gf16], x: Gf16) -> Gf16 {
    poly.iter().rev().fold(Gf16::ZERO, |acc, &c| acc * x + c)
}

/// Connection polynomial (ascending degree, trimmed) from syndromes S_1..S_q.
fn berlekamp_massey(synd: &[Gf16]) -> Vec<Gf16> {
    let mut c = vec![Gf16::ONE];
    let mut b = vec![Gf16::ONE];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut last_disc = Gf16::ONE;
    for n in 0..synd.len() {
        let mut disc = synd[n];
        for i in 1..=l.min(c.len() - 1) {
            disc += c[i] * synd[n - i];
        }
        if disc.is_zero() {
            shift += 1;
            continue;
        }
        let coef = disc.checked_div(last_disc).expect("previous discrepancy is nonzero");
        let prev = c.clone();
        if c.len() < b.len() + shift {
            c.resize(b.len() + shift, Gf16::ZERO);
        }
        for (i, &bi) in b.iter().enumerate() {
            c[i + shift] += coef * bi;
        }
        if 2 * l <= n {
            l = n + 1 - l;
            b = prev;
            last_disc = disc;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    c.truncate(l + 1);
    c.resize(l + 1, Gf16::ZERO);
    c
}

/// Codeword indices `i` (degree `n-1-i`) whose inverse locator is a root.
fn chien_search(locator: &[Gf16], n: usize) -> Vec<usize> {
    let exp = &tables().exp;
    let ord = GROUP_ORDER as u64;
    // term_k = lambda_k * a^(-(n-1)k) at i = 0; each step multiplies by a^k.
    let mut terms: Vec<(usize, u64)> = locator
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(k, l)| {
            let lg = l.log()? as u64;
            let start = (lg + ord * k as u64 - ((n as u64 - 1) * k as u64) % ord) % ord;
            Some((k, start))
        })
        .collect();
    let c0 = locator[0].0;
    let mut found = Vec::new();
    for i in 0..n {
        let mut acc = c0;
        for (_, lt) in &terms {
            acc ^= exp[*lt as usize];
        }
        if acc == 0 {
            found.push(i);
            if found.len() == locator.len() - 1 {
                break;
            }
        }
        for (k, lt) in terms.iter_mut() {
            *lt = (*lt + *k as u64) % ord;
        }
    }
    found
}

/// Big-endian byte pairs to symbols. Odd trailing bytes are not allowed.
pub fn bytes_to_symbols(bytes: &[u8]) -> Vec<Gf16> {
    debug_assert!(bytes.len().is_multiple_of(2));
    bytes.chunks_exact(2).map(|p| Gf16(u16::from_be_bytes([p[0], p[1]]))).collect()
}

pub fn symbols_to_bytes(syms: &[Gf16]) -> Vec<u8> {
    syms.iter().flat_map(|s| s.0.to_be_bytes()).collect()
}
