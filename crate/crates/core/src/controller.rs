//! Host-side memory controller flows.
//!
//! Every request sees the stored image through a transient fault view: the
//! codeword is copied and corrupted with the request's own fault stream, and
//! only units actually fetched are charged to the wire. Writes are error
//! free. Traffic is counted in whole 34-byte units and nothing else moves
//! bytes.

use std::fmt;
use std::str::FromStr;

use crate::chunk::{check_unit, ChunkUnit, UNIT_BYTES};
use crate::error::{invalid, Error, Result};
use crate::fault::{inject, FaultConfig, StreamLabel};
use crate::layout::{symbols_to_chunks, unit_of, Chunk, Codec, CodewordConfig, Store, StoredCodeword};
use crate::rs::{bytes_to_symbols, SparseDataVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SequentialReadPolicy {
    /// Check data-unit CRCs first; fetch parity and decode only on a failure.
    CrcFirst,
    /// Always fetch the whole codeword and decode.
    AlwaysDecode,
}

impl SequentialReadPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SequentialReadPolicy::CrcFirst => "crc_first",
            SequentialReadPolicy::AlwaysDecode => "always_decode",
        }
    }
}

impl fmt::Display for SequentialReadPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SequentialReadPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crc_first" => Ok(Self::CrcFirst),
            "always_decode" => Ok(Self::AlwaysDecode),
            other => invalid(format!("unknown sequential read policy {other:?}")),
        }
    }
}

/// Additive traffic and event counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessEventLog {
    pub wire_bytes_read: u64,
    pub wire_bytes_written: u64,
    /// Requests in which at least one fetched unit failed its CRC.
    pub crc_failures: u64,
    pub escalations: u64,
    pub rs_decodes: u64,
    pub rs_decode_failures: u64,
    pub silent_corruptions: u64,
    pub delta_updates: u64,
    pub full_rmw_fallbacks: u64,
}

impl AccessEventLog {
    fn fetch(&mut self, units: usize) {
        self.wire_bytes_read += (units * UNIT_BYTES) as u64;
    }

    fn write(&mut self, units: usize) {
        self.wire_bytes_written += (units * UNIT_BYTES) as u64;
    }

    pub fn wire_bytes(&self) -> u64 {
        self.wire_bytes_read + self.wire_bytes_written
    }

    pub fn merge(&mut self, other: &AccessEventLog) {
        self.wire_bytes_read += other.wire_bytes_read;
        self.wire_bytes_written += other.wire_bytes_written;
        self.crc_failures += other.crc_failures;
        self.escalations += other.escalations;
        self.rs_decodes += other.rs_decodes;
        self.rs_decode_failures += other.rs_decode_failures;
        self.silent_corruptions += other.silent_corruptions;
        self.delta_updates += other.delta_updates;
        self.full_rmw_fallbacks += other.full_rmw_fallbacks;
    }

    fn since(&self, before: &AccessEventLog) -> (u64, u64) {
        (
            self.wire_bytes_read - before.wire_bytes_read,
            self.wire_bytes_written - before.wire_bytes_written,
        )
    }
}

/// What happened while serving one request.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RequestOutcome {
    pub crc_failed: bool,
    pub escalated: bool,
    pub decoded: bool,
    /// False only when an RS decode was attempted and failed.
    pub decode_ok: bool,
    pub wire_read: u64,
    pub wire_written: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadResult {
    pub data: Vec<Chunk>,
    pub outcome: RequestOutcome,
}

/// A controller owns one store and serves requests against it serially.
#[derive(Debug, Clone)]
pub struct Controller {
    store: Store,
    faults: FaultConfig,
    policy: SequentialReadPolicy,
    log: AccessEventLog,
}

impl Controller {
    pub fn new(store: Store, faults: FaultConfig, policy: SequentialReadPolicy) -> Self {
        Self { store, faults, policy, log: AccessEventLog::default() }
    }

    pub fn log(&self) -> &AccessEventLog {
        &self.log
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn config(&self) -> CodewordConfig {
        *self.store.config()
    }

    pub fn policy(&self) -> SequentialReadPolicy {
        self.policy
    }

    pub fn faults(&self) -> &FaultConfig {
        &self.faults
    }

    /// Called by a harness holding ground truth when delivered data was wrong
    /// but not flagged.
    pub fn record_silent_corruption(&mut self) {
        self.log.silent_corruptions += 1;
    }

    fn faulty_view(&mut self, cw: usize, epoch: u64) -> Result<StoredCodeword> {
        let mut view = self.store.get(cw)?.clone();
        inject(&mut view, &self.faults, StreamLabel::new(cw as u64, epoch));
        Ok(view)
    }

    fn check_range(&self, offset: usize, k: usize) -> Result<()> {
        let d = self.store.config().data_chunks();
        if k == 0 || offset + k > d {
            return invalid(format!("chunk range {offset}+{k} outside codeword of {d} data chunks"));
        }
        Ok(())
    }

    /// Decode a full view, counting the attempt. `None` on failure.
    fn decode_view(&mut self, view: &StoredCodeword) -> Option<Vec<Chunk>> {
        self.log.rs_decodes += 1;
        match self.store.codec().decode(view) {
            Ok(out) => Some(symbols_to_chunks(&out.data)),
            Err(Error::DecodeFailure) => {
                self.log.rs_decode_failures += 1;
                None
            }
            Err(e) => unreachable!("view has the codec's shape: {e}"),
        }
    }

    fn finish(&self, before: &AccessEventLog, mut outcome: RequestOutcome) -> RequestOutcome {
        (outcome.wire_read, outcome.wire_written) = self.log.since(before);
        outcome
    }

    /// Random read of `k` chunks starting at `offset` within codeword `cw`.
    pub fn random_read(&mut self, cw: usize, offset: usize, k: usize, epoch: u64) -> Result<ReadResult> {
        self.check_range(offset, k)?;
        let before = self.log;
        let view = self.faulty_view(cw, epoch)?;
        let m_w = self.store.config().wire_chunks();
        let target = &view.units[offset..offset + k];
        self.log.fetch(k);
        let mut outcome = RequestOutcome { decode_ok: true, ..Default::default() };
        let data = if target.iter().all(check_unit) {
            target.iter().map(|u| u.data).collect()
        } else {
            outcome.crc_failed = true;
            outcome.escalated = true;
            outcome.decoded = true;
            self.log.crc_failures += 1;
            self.log.escalations += 1;
            self.log.fetch(m_w - k);
            match self.decode_view(&view) {
                Some(chunks) => chunks[offset..offset + k].to_vec(),
                None => {
                    outcome.decode_ok = false;
                    view.units[offset..offset + k].iter().map(|u| u.data).collect()
                }
            }
        };
        Ok(ReadResult { data, outcome: self.finish(&before, outcome) })
    }

    /// Random write of `new_chunks` at `offset`. Returns the controller's view
    /// of the overwritten chunks alongside the outcome.
    pub fn random_write(
        &mut self,
        cw: usize,
        offset: usize,
        new_chunks: &[Chunk],
        epoch: u64,
    ) -> Result<ReadResult> {
        let k = new_chunks.len();
        self.check_range(offset, k)?;
        let before = self.log;
        let view = self.faulty_view(cw, epoch)?;
        let cfg = *self.store.config();
        let (d, r, m_w) = (cfg.data_chunks(), cfg.parity_chunks(), cfg.wire_chunks());
        self.log.fetch(k + r);
        let mut outcome = RequestOutcome { decode_ok: true, ..Default::default() };

        let fetched_ok = view.units[offset..offset + k].iter().all(check_unit)
            && view.units[d..].iter().all(check_unit);
        let old: Vec<Chunk>;
        if fetched_ok {
            old = view.units[offset..offset + k].iter().map(|u| u.data).collect();
            let codec = self.store.codec();
            let parity = differential_parity(codec, &view, offset, &old, new_chunks)?;
            let parity_units = codec.parity_units(&parity);
            let stored = self.store.get_mut(cw)?;
            for (i, c) in new_chunks.iter().enumerate() {
                stored.units[offset + i] = unit_of(*c);
            }
            stored.units[d..].copy_from_slice(&parity_units);
            self.log.write(k + r);
            self.log.delta_updates += 1;
        } else {
            outcome.crc_failed = true;
            outcome.escalated = true;
            outcome.decoded = true;
            self.log.crc_failures += 1;
            self.log.escalations += 1;
            self.log.full_rmw_fallbacks += 1;
            self.log.fetch(m_w - k - r);
            let mut data = match self.decode_view(&view) {
                Some(chunks) => chunks,
                None => {
                    outcome.decode_ok = false;
                    view.data_chunks(&cfg)
                }
            };
            old = data[offset..offset + k].to_vec();
            data[offset..offset + k].copy_from_slice(new_chunks);
            let rebuilt = self.store.codec().build(&data)?;
            self.store.put(cw, rebuilt)?;
            self.log.write(m_w);
        }
        Ok(ReadResult { data: old, outcome: self.finish(&before, outcome) })
    }

    /// Read a whole codeword under the controller's sequential policy.
    pub fn sequential_read(&mut self, cw: usize, epoch: u64) -> Result<ReadResult> {
        let before = self.log;
        let view = self.faulty_view(cw, epoch)?;
        let cfg = *self.store.config();
        let mut outcome = RequestOutcome { decode_ok: true, ..Default::default() };
        let raw = view.data_chunks(&cfg);
        let data = match self.policy {
            SequentialReadPolicy::AlwaysDecode => {
                self.log.fetch(cfg.wire_chunks());
                outcome.decoded = true;
                self.decode_view(&view)
            }
            SequentialReadPolicy::CrcFirst => {
                self.log.fetch(cfg.data_chunks());
                if view.units[..cfg.data_chunks()].iter().all(check_unit) {
                    Some(raw.clone())
                } else {
                    outcome.crc_failed = true;
                    outcome.escalated = true;
                    outcome.decoded = true;
                    self.log.crc_failures += 1;
                    self.log.escalations += 1;
                    self.log.fetch(cfg.parity_chunks());
                    self.decode_view(&view)
                }
            }
        };
        let data = data.unwrap_or_else(|| {
            outcome.decode_ok = false;
            raw
        });
        Ok(ReadResult { data, outcome: self.finish(&before, outcome) })
    }

    /// Encode and write a whole codeword.
    pub fn sequential_write(&mut self, cw: usize, data: &[Chunk]) -> Result<RequestOutcome> {
        let before = self.log;
        let stored = self.store.codec().build(data)?;
        let units = stored.units.len();
        self.store.put(cw, stored)?;
        self.log.write(units);
        Ok(self.finish(&before, RequestOutcome { decode_ok: true, ..Default::default() }))
    }
}

/// New parity symbols for overwriting `old` with `new` at `offset`, using
/// the parity held in `view`.
fn differential_parity(
    codec: &Codec,
    view: &StoredCodeword,
    offset: usize,
    old: &[Chunk],
    new: &[Chunk],
) -> Result<Vec<crate::gf::Gf16>> {
    let cfg = codec.config();
    let d_syms = 16 * cfg.data_chunks();
    let to_syms = |chunks: &[Chunk]| chunks.iter().flat_map(|c| bytes_to_symbols(c)).collect::<Vec<_>>();
    let old_sv = SparseDataVector::from_run(d_syms, 16 * offset, &to_syms(old))?;
    let new_sv = SparseDataVector::from_run(d_syms, 16 * offset, &to_syms(new))?;
    let delta = codec.code().parity_delta(&old_sv, &new_sv)?;
    let parity_old = codec.parity_symbols(&view.units[cfg.data_chunks()..]);
    Ok(parity_old.into_iter().zip(delta).map(|(p, dl)| p + dl).collect())
}

/// A stored unit with its CRC recomputed, for tests that need to plant
/// corruption the CRC cannot see.
pub fn reseal(unit: &ChunkUnit) -> ChunkUnit {
    unit_of(unit.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{seeded_chunks, Content, Preset};

    fn controller(preset: Preset, bytes: usize, ber: f64, policy: SequentialReadPolicy) -> Controller {
        let cfg = CodewordConfig::from_preset(preset, bytes, 16).unwrap();
        let store = Store::new(cfg, 8, Content::Seeded(17));
        Controller::new(store, FaultConfig::new(ber, 99).unwrap(), policy)
    }

    #[test]
    fn clean_random_read_costs_k_units() {
        let mut c = controller(Preset::FixedParity, 512, 0.0, SequentialReadPolicy::CrcFirst);
        let truth = c.store().initial_data(3);
        let r = c.random_read(3, 5, 4, 0).unwrap();
        assert_eq!(r.data, truth[5..9].to_vec());
        assert_eq!(r.outcome.wire_read, 4 * 34);
        assert_eq!(c.log().escalations, 0);
        assert!(c.random_read(3, 14, 3, 1).is_err());
        assert!(c.random_read(3, 0, 0, 1).is_err());
        assert!(c.random_read(8, 0, 1, 1).is_err());
    }

    #[test]
    fn escalated_read_fetches_rest_of_codeword() {
        let mut c = controller(Preset::Rate16_17, 512, 0.0, SequentialReadPolicy::CrcFirst);
        let truth = c.store().initial_data(0);
        c.store_mut().get_mut(0).unwrap().units[2].data[0] ^= 0x01;
        let r = c.random_read(0, 1, 2, 0).unwrap();
        assert_eq!(r.data, truth[1..3].to_vec());
        assert!(r.outcome.escalated && r.outcome.decode_ok);
        assert_eq!(r.outcome.wire_read, 17 * 34);
        let log = c.log();
        assert_eq!((log.crc_failures, log.escalations, log.rs_decodes), (1, 1, 1));
    }

    #[test]
    fn delta_write_matches_fresh_build() {
        let mut c = controller(Preset::Rate16_17, 1024, 0.0, SequentialReadPolicy::CrcFirst);
        let mut truth = c.store().initial_data(4);
        let fresh = seeded_chunks(1234, 3);
        let r = c.random_write(4, 10, &fresh, 0).unwrap();
        assert_eq!(r.data, truth[10..13].to_vec());
        truth[10..13].copy_from_slice(&fresh);
        let expected = c.store().codec().build(&truth).unwrap();
        assert_eq!(c.store_mut().get(4).unwrap(), &expected);
        let cfg = c.config();
        assert_eq!(r.outcome.wire_read, 34 * (3 + cfg.parity_chunks() as u64));
        assert_eq!(r.outcome.wire_written, 34 * (3 + cfg.parity_chunks() as u64));
        assert_eq!(c.log().delta_updates, 1);
    }

    #[test]
    fn identical_write_leaves_store_unchanged() {
        let mut c = controller(Preset::FixedParity, 256, 0.0, SequentialReadPolicy::CrcFirst);
        let before = c.store_mut().get(2).unwrap().clone();
        let same = before.units[3..5].iter().map(|u| u.data).collect::<Vec<_>>();
        c.random_write(2, 3, &same, 0).unwrap();
        assert_eq!(c.store_mut().get(2).unwrap(), &before);
    }

    #[test]
    fn fallback_write_repairs_and_rewrites() {
        let mut c = controller(Preset::FixedParity, 512, 0.0, SequentialReadPolicy::CrcFirst);
        let mut truth = c.store().initial_data(1);
        c.store_mut().get_mut(1).unwrap().units[6].data[9] ^= 0x40;
        let fresh = seeded_chunks(5, 2);
        let r = c.random_write(1, 6, &fresh, 0).unwrap();
        assert!(r.outcome.escalated && r.outcome.decode_ok);
        assert_eq!(r.data[0], truth[6]);
        truth[6..8].copy_from_slice(&fresh);
        let expected = c.store().codec().build(&truth).unwrap();
        assert_eq!(c.store_mut().get(1).unwrap(), &expected);
        assert_eq!(r.outcome.wire_read, 17 * 34);
        assert_eq!(r.outcome.wire_written, 17 * 34);
        assert_eq!(c.log().full_rmw_fallbacks, 1);
    }

    #[test]
    fn sequential_read_policies() {
        for policy in [SequentialReadPolicy::AlwaysDecode, SequentialReadPolicy::CrcFirst] {
            let mut c = controller(Preset::FixedParity, 512, 0.0, policy);
            let truth = c.store().initial_data(0);
            let r = c.sequential_read(0, 0).unwrap();
            assert_eq!(r.data, truth);
            let expected = match policy {
                SequentialReadPolicy::AlwaysDecode => 17 * 34,
                SequentialReadPolicy::CrcFirst => 16 * 34,
            };
            assert_eq!(r.outcome.wire_read, expected);
            assert_eq!(c.log().rs_decodes, (policy == SequentialReadPolicy::AlwaysDecode) as u64);
        }
    }

    #[test]
    fn sequential_write_round_trip_and_idempotence() {
        let mut c = controller(Preset::Rate16_17, 256, 0.0, SequentialReadPolicy::AlwaysDecode);
        let data = seeded_chunks(77, 8);
        let o = c.sequential_write(5, &data).unwrap();
        assert_eq!(o.wire_written, 9 * 34);
        let img = c.store_mut().get(5).unwrap().clone();
        c.sequential_write(5, &data).unwrap();
        assert_eq!(c.store_mut().get(5).unwrap(), &img);
        assert_eq!(c.sequential_read(5, 0).unwrap().data, data);
        assert!(c.sequential_write(5, &data[..7]).is_err());
    }

    #[test]
    fn sequential_read_corrects_planted_symbol_errors() {
        let mut c = controller(Preset::FixedParity, 2048, 0.0, SequentialReadPolicy::AlwaysDecode);
        let data = seeded_chunks(3, 64);
        c.sequential_write(0, &data).unwrap();
        let stored = c.store_mut().get_mut(0).unwrap();
        for i in 0..8 {
            stored.units[i * 7].data[2 * i] ^= 0xFF;
        }
        let r = c.sequential_read(0, 0).unwrap();
        assert!(r.outcome.decode_ok);
        assert_eq!(r.data, data);
    }

    #[test]
    fn crc_escape_is_served_silently() {
        let mut c = controller(Preset::FixedParity, 256, 0.0, SequentialReadPolicy::CrcFirst);
        let stored = c.store_mut().get_mut(0).unwrap();
        stored.units[1].data[0] ^= 1;
        stored.units[1] = reseal(&stored.units[1]);
        let truth = c.store().initial_data(0);
        let r = c.random_read(0, 1, 1, 0).unwrap();
        assert!(!r.outcome.escalated);
        assert_ne!(r.data[0], truth[1]);
    }

    #[test]
    fn decode_failure_is_flagged_and_delivered() {
        let mut c = controller(Preset::FixedParity, 256, 0.0, SequentialReadPolicy::AlwaysDecode);
        let stored = c.store_mut().get_mut(0).unwrap();
        for i in 0..8 {
            stored.units[i].data[0] ^= 0xA5;
            stored.units[i].data[20] ^= 0x5A;
        }
        let r = c.sequential_read(0, 0).unwrap();
        assert!(!r.outcome.decode_ok);
        assert_eq!(c.log().rs_decode_failures, 1);
    }

    #[test]
    fn wire_counters_are_whole_units() {
        let mut c = controller(Preset::Rate16_17, 512, 1e-3, SequentialReadPolicy::CrcFirst);
        for epoch in 0..500u64 {
            let cw = (epoch % 8) as usize;
            match epoch % 4 {
                0 => drop(c.random_read(cw, 3, 2, epoch).unwrap()),
                1 => drop(c.sequential_read(cw, epoch).unwrap()),
                2 => drop(c.random_write(cw, 0, &seeded_chunks(epoch, 3), epoch).unwrap()),
                _ => drop(c.sequential_write(cw, &seeded_chunks(epoch, 16)).unwrap()),
            }
        }
        let log = c.log();
        assert_eq!(log.wire_bytes_read % 34, 0);
        assert_eq!(log.wire_bytes_written % 34, 0);
        assert!(log.rs_decodes >= log.escalations);
        assert!(log.escalations <= log.crc_failures);
    }
}
