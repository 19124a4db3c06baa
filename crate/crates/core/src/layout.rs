//! Codeword geometry and the simulated memory image.
//!
//! A codeword is `d` data chunks followed by `r = ceil(2q / 32)` parity
//! chunks, every chunk carried in its own CRC-protected 34-byte unit. The
//! last parity chunk is zero padded; pad bytes are covered by the CRC but
//! are not RS symbols. Units are striped round-robin over `s` channels.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};

use crate::chunk::{check_unit, make_unit, ChunkUnit, CHUNK_BYTES, UNIT_BYTES};
use crate::error::{invalid, Error, Result};
use crate::fault::{substream, StreamLabel};
use crate::gf::Gf16;
use crate::rs::{bytes_to_symbols, symbols_to_bytes, DecodeOutcome, RsCode, RsGeometry};

pub const MAX_STRIPE_WIDTH: usize = 16;
pub type Chunk = [u8; CHUNK_BYTES];

/// Parity sizing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    /// One parity symbol per data chunk: information rate 16/17.
    Rate16_17,
    /// Sixteen parity symbols (one parity chunk) regardless of size.
    FixedParity,
    Custom,
}

impl Preset {
    pub fn id(self) -> u8 {
        match self {
            Preset::Custom => 0,
            Preset::Rate16_17 => 1,
            Preset::FixedParity => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Preset::Custom),
            1 => Some(Preset::Rate16_17),
            2 => Some(Preset::FixedParity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Rate16_17 => "rate16_17",
            Preset::FixedParity => "fixed_parity",
            Preset::Custom => "custom",
        }
    }

    /// Parity symbols for `d` data chunks.
    pub fn parity_syms(self, data_chunks: usize) -> Option<usize> {
        match self {
            Preset::Rate16_17 => Some(data_chunks),
            Preset::FixedParity => Some(16),
            Preset::Custom => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate16_17" => Ok(Preset::Rate16_17),
            "fixed_parity" => Ok(Preset::FixedParity),
            "custom" => Ok(Preset::Custom),
            other => invalid(format!("unknown preset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodewordConfig {
    data_chunks: usize,
    parity_syms: usize,
    stripe_width: usize,
    preset: Preset,
}

impl CodewordConfig {
    pub fn new(data_chunks: usize, parity_syms: usize, stripe_width: usize) -> Result<Self> {
        Self::with_preset(data_chunks, parity_syms, stripe_width, Preset::Custom)
    }

    fn with_preset(d: usize, q: usize, s: usize, preset: Preset) -> Result<Self> {
        if d == 0 || q == 0 {
            return invalid("codeword needs at least one data chunk and one parity symbol");
        }
        if !(1..=MAX_STRIPE_WIDTH).contains(&s) {
            return invalid(format!("stripe width {s} outside 1..={MAX_STRIPE_WIDTH}"));
        }
        RsGeometry::new(16 * d, q)?;
        Ok(Self { data_chunks: d, parity_syms: q, stripe_width: s, preset })
    }

    /// Geometry for a codeword carrying `codeword_bytes` of user data.
    pub fn from_preset(preset: Preset, codeword_bytes: usize, stripe_width: usize) -> Result<Self> {
        if codeword_bytes == 0 || !codeword_bytes.is_multiple_of(CHUNK_BYTES) {
            return invalid(format!("codeword size {codeword_bytes} is not a positive multiple of 32"));
        }
        let d = codeword_bytes / CHUNK_BYTES;
        let Some(q) = preset.parity_syms(d) else {
            return invalid("the custom preset needs an explicit parity count");
        };
        Self::with_preset(d, q, stripe_width, preset)
    }

    pub fn data_chunks(&self) -> usize {
        self.data_chunks
    }

    pub fn parity_syms(&self) -> usize {
        self.parity_syms
    }

    pub fn stripe_width(&self) -> usize {
        self.stripe_width
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    pub fn parity_chunks(&self) -> usize {
        (2 * self.parity_syms).div_ceil(CHUNK_BYTES)
    }

    pub fn wire_chunks(&self) -> usize {
        self.data_chunks + self.parity_chunks()
    }

    pub fn codeword_bytes(&self) -> usize {
        self.data_chunks * CHUNK_BYTES
    }

    pub fn wire_bytes(&self) -> usize {
        self.wire_chunks() * UNIT_BYTES
    }

    pub fn geometry(&self) -> RsGeometry {
        RsGeometry::new(16 * self.data_chunks, self.parity_syms).expect("validated at construction")
    }

    pub fn t(&self) -> usize {
        self.parity_syms / 2
    }

    pub fn information_rate(&self) -> f64 {
        let ds = 16 * self.data_chunks;
        ds as f64 / (ds + self.parity_syms) as f64
    }
}

/// Round-robin placement of a unit: `(channel, slot)`.
pub fn map_chunk_to_channel(config: &CodewordConfig, chunk_index: usize) -> Result<(usize, usize)> {
    if chunk_index >= config.wire_chunks() {
        return invalid(format!(
            "chunk index {chunk_index} outside codeword of {} units",
            config.wire_chunks()
        ));
    }
    let s = config.stripe_width;
    Ok((chunk_index % s, chunk_index / s))
}

/// The stored image of one codeword, data units then parity units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredCodeword {
    pub units: Vec<ChunkUnit>,
}

impl StoredCodeword {
    pub fn data_chunks(&self, config: &CodewordConfig) -> Vec<Chunk> {
        self.units[..config.data_chunks].iter().map(|u| u.data).collect()
    }

    pub fn all_clean(&self) -> bool {
        self.units.iter().all(check_unit)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.units.iter().flat_map(|u| u.to_bytes()).collect()
    }
}

/// A codeword geometry together with its RS code.
#[derive(Debug, Clone)]
pub struct Codec {
    config: CodewordConfig,
    code: RsCode,
}

impl Codec {
    pub fn new(config: CodewordConfig) -> Self {
        Self { config, code: RsCode::new(config.geometry()) }
    }

    pub fn config(&self) -> &CodewordConfig {
        &self.config
    }

    pub fn code(&self) -> &RsCode {
        &self.code
    }

    pub fn build(&self, data: &[Chunk]) -> Result<StoredCodeword> {
        let d = self.config.data_chunks;
        if data.len() != d {
            return invalid(format!("expected {d} data chunks, got {}", data.len()));
        }
        let syms: Vec<Gf16> = data.iter().flat_map(|c| bytes_to_symbols(c)).collect();
        let parity = self.code.encode(&syms)?;
        let mut units: Vec<ChunkUnit> = data.iter().map(|c| unit_of(*c)).collect();
        units.extend(self.parity_units(&parity));
        Ok(StoredCodeword { units })
    }

    /// Parity symbols packed into zero-padded CRC units.
    pub fn parity_units(&self, parity: &[Gf16]) -> Vec<ChunkUnit> {
        let mut bytes = symbols_to_bytes(parity);
        bytes.resize(self.config.parity_chunks() * CHUNK_BYTES, 0);
        bytes.chunks_exact(CHUNK_BYTES).map(|c| make_unit(c).expect("32-byte slice")).collect()
    }

    /// RS symbols of a stored image: 16 per data chunk, then the `q` parity
    /// symbols. CRC and pad bytes are excluded.
    pub fn symbol_view(&self, stored: &StoredCodeword) -> Vec<Gf16> {
        let d = self.config.data_chunks;
        let mut syms: Vec<Gf16> =
            stored.units[..d].iter().flat_map(|u| bytes_to_symbols(&u.data)).collect();
        syms.extend(self.parity_symbols(&stored.units[d..]));
        syms
    }

    pub fn parity_symbols(&self, parity_units: &[ChunkUnit]) -> Vec<Gf16> {
        let bytes: Vec<u8> = parity_units.iter().flat_map(|u| u.data).collect();
        bytes_to_symbols(&bytes[..2 * self.config.parity_syms])
    }

    pub fn decode(&self, stored: &StoredCodeword) -> Result<DecodeOutcome> {
        self.code.decode(&self.symbol_view(stored))
    }
}

pub(crate) fn unit_of(chunk: Chunk) -> ChunkUnit {
    make_unit(&chunk).expect("fixed-size chunk")
}

pub(crate) fn symbols_to_chunks(syms: &[Gf16]) -> Vec<Chunk> {
    symbols_to_bytes(syms)
        .chunks_exact(CHUNK_BYTES)
        .map(|c| c.try_into().expect("exact chunk"))
        .collect()
}

/// Build one codeword with a fresh code instance.
pub fn build_codeword(data: &[Chunk], config: &CodewordConfig) -> Result<StoredCodeword> {
    Codec::new(*config).build(data)
}

/// Initial contents of a simulated store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Content {
    Zero,
    /// Pseudo-random data derived from the seed and codeword index.
    Seeded(u64),
}

/// Label epoch reserved for generating initial store contents.
const CONTENT_EPOCH: u64 = u64::MAX;

/// An array of codewords, materialised on first touch.
#[derive(Debug, Clone)]
pub struct Store {
    codec: Codec,
    content: Content,
    slots: Vec<Option<StoredCodeword>>,
}

pub const DUMP_MAGIC: [u8; 4] = *b"HBMC";
pub const DUMP_HEADER_BYTES: usize = 16;
const DUMP_VERSION: u8 = 1;

impl Store {
    pub fn new(config: CodewordConfig, codewords: usize, content: Content) -> Self {
        Self { codec: Codec::new(config), content, slots: vec![None; codewords] }
    }

    pub fn codec(&self) -> &Codec {
        &self.codec
    }

    pub fn config(&self) -> &CodewordConfig {
        &self.codec.config
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Data a codeword holds before any write.
    pub fn initial_data(&self, cw: usize) -> Vec<Chunk> {
        let d = self.codec.config.data_chunks;
        match self.content {
            Content::Zero => vec![[0u8; CHUNK_BYTES]; d],
            Content::Seeded(seed) => {
                let mut rng = substream(seed, StreamLabel::new(cw as u64, CONTENT_EPOCH));
                let mut out = vec![[0u8; CHUNK_BYTES]; d];
                for c in &mut out {
                    rng.fill_bytes(c);
                }
                out
            }
        }
    }

    fn check_index(&self, cw: usize) -> Result<()> {
        if cw >= self.slots.len() {
            return invalid(format!("codeword {cw} outside store of {}", self.slots.len()));
        }
        Ok(())
    }

    pub fn get(&mut self, cw: usize) -> Result<&StoredCodeword> {
        Ok(self.get_mut(cw)?)
    }

    pub fn get_mut(&mut self, cw: usize) -> Result<&mut StoredCodeword> {
        self.check_index(cw)?;
        if self.slots[cw].is_none() {
            let built = self.codec.build(&self.initial_data(cw))?;
            self.slots[cw] = Some(built);
        }
        Ok(self.slots[cw].as_mut().expect("materialised"))
    }

    pub fn put(&mut self, cw: usize, stored: StoredCodeword) -> Result<()> {
        self.check_index(cw)?;
        if stored.units.len() != self.codec.config.wire_chunks() {
            return invalid("stored codeword has the wrong number of units");
        }
        self.slots[cw] = Some(stored);
        Ok(())
    }

    /// Serialized image: 16-byte header then every unit of every codeword.
    ///
    /// Header: magic `HBMC`, `d` (u32 BE), `q` (u32 BE), `s` (u16 BE),
    /// preset id, format version.
    pub fn dump(&mut self) -> Vec<u8> {
        let cfg = self.codec.config;
        let mut out = Vec::with_capacity(DUMP_HEADER_BYTES + self.slots.len() * cfg.wire_bytes());
        out.extend_from_slice(&DUMP_MAGIC);
        out.extend_from_slice(&(cfg.data_chunks as u32).to_be_bytes());
        out.extend_from_slice(&(cfg.parity_syms as u32).to_be_bytes());
        out.extend_from_slice(&(cfg.stripe_width as u16).to_be_bytes());
        out.push(cfg.preset.id());
        out.push(DUMP_VERSION);
        for cw in 0..self.slots.len() {
            let stored = self.get(cw).expect("index in range");
            out.extend(stored.to_bytes());
        }
        out
    }

    pub fn from_dump(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < DUMP_HEADER_BYTES || bytes[..4] != DUMP_MAGIC {
            return invalid("not a store dump");
        }
        if bytes[15] != DUMP_VERSION {
            return invalid(format!("unsupported dump version {}", bytes[15]));
        }
        let d = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let q = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let s = u16::from_be_bytes(bytes[12..14].try_into().unwrap()) as usize;
        let preset = Preset::from_id(bytes[14])
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset id {}", bytes[14])))?;
        let config = CodewordConfig::with_preset(d, q, s, preset)?;
        let body = &bytes[DUMP_HEADER_BYTES..];
        let per_cw = config.wire_bytes();
        if !body.len().is_multiple_of(per_cw) {
            return invalid(format!("dump body of {} bytes is not a whole number of codewords", body.len()));
        }
        let slots = body
            .chunks_exact(per_cw)
            .map(|cw| {
                let units = cw.chunks_exact(UNIT_BYTES).map(ChunkUnit::from_bytes).collect::<Result<_>>()?;
                Ok(Some(StoredCodeword { units }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { codec: Codec::new(config), content: Content::Zero, slots })
    }
}

/// The codeword sizes swept by the experiments.
pub const SWEEP_SIZES: [usize; 6] = [64, 128, 256, 512, 1024, 2048];

pub fn seeded_chunks(seed: u64, n: usize) -> Vec<Chunk> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![[0u8; CHUNK_BYTES]; n];
    for c in &mut out {
        rng.fill_bytes(c);
    }
    out
}
