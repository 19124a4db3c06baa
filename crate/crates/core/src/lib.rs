//! Host-side HBM fault tolerance built from large-codeword Reed-Solomon codes
//! and per-chunk CRC filtering.
//!
//! The crate is organised bottom-up:
//!
//! * [`gf`] and [`rs`]: GF(2^16) arithmetic and a systematic shortened RS code
//!   with bounded-distance decoding and sparse (differential) parity updates.
//! * [`chunk`]: the 34-byte CRC-augmented transfer unit.
//! * [`layout`]: codeword geometry, channel striping and the simulated store.
//! * [`fault`]: seeded raw bit-error injection.
//! * [`controller`]: random/sequential read and write flows with traffic
//!   accounting.
//! * [`bitplane`]: bit-plane decomposition for importance-adaptive protection
//!   and the BF16 field sensitivity proxy.
//! * [`perf`]: analytic reliability formulas, synthetic traces and the
//!   bandwidth-to-throughput model.

pub mod bitplane;
pub mod chunk;
pub mod controller;
pub mod fault;
pub mod gf;
pub mod layout;
pub mod perf;
pub mod rs;

mod error;

pub use error::{Error, Result};
