//! The 34-byte transfer unit: a 32-byte chunk followed by its CRC-16.

use crc::{Crc, CRC_16_IBM_3740};

use crate::error::{invalid, Result};

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, unreflected, no final XOR).
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub const CHUNK_BYTES: usize = 32;
pub const UNIT_BYTES: usize = 34;
pub const UNIT_BITS: usize = UNIT_BYTES * 8;

pub fn crc16(data: &[u8]) -> u16 {
    CCITT_FALSE.checksum(data)
}

/// A chunk and the CRC stored alongside it. The CRC need not match the data:
/// fault injection corrupts both fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChunkUnit {
    pub data: [u8; CHUNK_BYTES],
    pub crc: u16,
}

impl ChunkUnit {
    /// Wire image: data then CRC big-endian.
    pub fn to_bytes(&self) -> [u8; UNIT_BYTES] {
        let mut out = [0u8; UNIT_BYTES];
        out[..CHUNK_BYTES].copy_from_slice(&self.data);
        out[CHUNK_BYTES..].copy_from_slice(&self.crc.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != UNIT_BYTES {
            return invalid(format!("unit must be {UNIT_BYTES} bytes, got {}", bytes.len()));
        }
        let mut data = [0u8; CHUNK_BYTES];
        data.copy_from_slice(&bytes[..CHUNK_BYTES]);
        Ok(Self { data, crc: u16::from_be_bytes([bytes[32], bytes[33]]) })
    }

    /// Flip wire bit `bit` (0 = MSB of byte 0, 271 = LSB of the CRC low byte).
    pub fn flip_bit(&mut self, bit: usize) {
        assert!(bit < UNIT_BITS, "bit {bit} outside a {UNIT_BITS}-bit unit");
        let (byte, mask) = (bit / 8, 0x80u8 >> (bit % 8));
        if byte < CHUNK_BYTES {
            self.data[byte] ^= mask;
        } else {
            let shift = if byte == CHUNK_BYTES { 8 } else { 0 };
            self.crc ^= (mask as u16) << shift;
        }
    }

    pub fn is_clean(&self) -> bool {
        check_unit(self)
    }
}

pub fn make_unit(data: &[u8]) -> Result<ChunkUnit> {
    let data: [u8; CHUNK_BYTES] = match data.try_into() {
        Ok(d) => d,
        Err(_) => return invalid(format!("chunk must be {CHUNK_BYTES} bytes, got {}", data.len())),
    };
    Ok(ChunkUnit { data, crc: crc16(&data) })
}

pub fn check_unit(unit: &ChunkUnit) -> bool {
    crc16(&unit.data) == unit.crc
}
