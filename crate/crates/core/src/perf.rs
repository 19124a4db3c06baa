//! Reliability formulas, synthetic traces and the traffic-to-throughput model.
//!
//! Throughput is modelled as memory bound: tokens/s scales with the fraction
//! of wire bytes that carry useful user data, normalised so that an ideal
//! error-free 34-byte-per-32-byte transfer gives the baseline rate.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use statrs::function::factorial::ln_binomial;

use crate::bitplane::{Bf16Field, ProtectionConfig};
use crate::chunk::{CHUNK_BYTES, UNIT_BITS};
use crate::controller::{AccessEventLog, Controller, RequestOutcome, SequentialReadPolicy};
use crate::error::{invalid, Error, Result};
use crate::fault::{substream, unit_error_prob, FaultConfig, StreamLabel};
use crate::layout::{Chunk, CodewordConfig, Content, Preset, Store};

/// Baseline tokens/s of the error-free system.
pub const BASELINE_TOKENS_PER_S: f64 = 18.51;
/// Ideal utilization: 32 user bytes per 34-byte unit.
pub const IDEAL_UTILIZATION: f64 = 32.0 / 34.0;
/// Default simulated store size in codewords.
pub const DEFAULT_STORE_CODEWORDS: usize = 1 << 14;

// Stream labels reserved for trace generation and written data.
const TRACE_LABEL: u64 = u64::MAX - 1;
const WRITE_DATA_LABEL: u64 = u64::MAX - 2;

/// Probability that at least one of `k` fetched units is hit by a raw error.
pub fn p_escalate(p: f64, k: u64) -> f64 {
    unit_error_prob(p, UNIT_BITS as u64 * k)
}

/// Natural log of the probability that a codeword holds more than `t`
/// symbol errors, with 16-bit symbols failing independently.
pub fn ln_decode_failure_rate(p: f64, config: &CodewordConfig) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = (16 * config.data_chunks() + config.parity_syms()) as u64;
    let t = config.t() as u64;
    if p >= 1.0 {
        return 0.0;
    }
    let ln_ok = 16.0 * (-p).ln_1p();
    let ln_ps = (-ln_ok.exp_m1()).ln();
    let ln_qs = ln_ok;
    let terms: Vec<f64> = (t + 1..=n)
        .map(|j| ln_binomial(n, j) + j as f64 * ln_ps + (n - j) as f64 * ln_qs)
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn decode_failure_rate(p: f64, config: &CodewordConfig) -> f64 {
    ln_decode_failure_rate(p, config).exp()
}

/// Raw BER at which the decode failure rate equals `target`, by bisection
/// on log10(p) over [1e-30, 0.5].
pub fn tolerable_ber(config: &CodewordConfig, target: f64) -> f64 {
    let ln_target = target.ln();
    let (mut lo, mut hi) = (-30.0f64, 0.5f64.log10());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_decode_failure_rate(10f64.powf(mid), config) > ln_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    10f64.powf(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RequestKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessClass {
    Sequential,
    Random,
}

impl RequestKind {
    pub fn name(self) -> &'static str {
        match self {
            RequestKind::Read => "read",
            RequestKind::Write => "write",
        }
    }
}

impl AccessClass {
    pub fn name(self) -> &'static str {
        match self {
            AccessClass::Sequential => "seq",
            AccessClass::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub id: u64,
    pub kind: RequestKind,
    pub class: AccessClass,
    pub codeword: usize,
    /// First data chunk; 0 for sequential requests.
    pub offset: usize,
    /// Data chunks touched.
    pub chunks: usize,
}

/// Synthetic workload parameters.
///
/// `seq_ratio` is the fraction of accessed data chunks that belong to
/// sequential whole-codeword streams; the rest are random accesses of `k`
/// chunks, `k` drawn from `k_weights` over 1..=4 and capped at the codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    pub request_count: usize,
    pub seq_ratio: f64,
    pub k_weights: [f64; 4],
    pub read_fraction: f64,
    pub seed: u64,
    pub store_codewords: usize,
    pub data_chunks: usize,
}

impl TraceParams {
    pub fn new(request_count: usize, seq_ratio: f64, data_chunks: usize, seed: u64) -> Self {
        Self {
            request_count,
            seq_ratio,
            k_weights: [0.25; 4],
            read_fraction: 1.0,
            seed,
            store_codewords: DEFAULT_STORE_CODEWORDS,
            data_chunks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.seq_ratio) {
            return invalid(format!("seq_ratio {} outside [0, 1]", self.seq_ratio));
        }
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return invalid(format!("read_fraction {} outside [0, 1]", self.read_fraction));
        }
        if self.k_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return invalid("k weights must be finite and non-negative");
        }
        let sum: f64 = self.k_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return invalid(format!("k weights sum to {sum}, not 1"));
        }
        if self.store_codewords == 0 || self.data_chunks == 0 {
            return invalid("store and codeword must be non-empty");
        }
        Ok(())
    }

    /// Mean chunks per random request after capping at the codeword size.
    pub fn mean_random_chunks(&self) -> f64 {
        self.k_weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i + 1).min(self.data_chunks) as f64)
            .sum()
    }

    /// Per-request probability of a random access that yields the requested
    /// chunk-level mix.
    pub fn random_request_prob(&self) -> f64 {
        let rho = 1.0 - self.seq_ratio;
        if rho <= 0.0 {
            return 0.0;
        }
        if rho >= 1.0 {
            return 1.0;
        }
        let r = rho / self.mean_random_chunks();
        r / (r + self.seq_ratio / self.data_chunks as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub params: TraceParams,
    pub requests: Vec<Request>,
}

impl Trace {
    /// One line per request: `id,kind,class,codeword,offset,chunks`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,kind,class,codeword,offset,chunks\n");
        for r in &self.requests {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.id,
                r.kind.name(),
                r.class.name(),
                r.codeword,
                r.offset,
                r.chunks
            ));
        }
        out
    }
}

pub fn gen_trace(tp: &TraceParams) -> Result<Trace> {
    tp.validate()?;
    let mut rng = substream(tp.seed, StreamLabel::new(TRACE_LABEL, 0));
    let p_random = tp.random_request_prob();
    let k_dist = WeightedIndex::new(tp.k_weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let d = tp.data_chunks;
    let mut cursor = 0usize;
    let mut requests = Vec::with_capacity(tp.request_count);
    for id in 0..tp.request_count as u64 {
        let random = rng.random_bool(p_random);
        let kind = if rng.random_bool(tp.read_fraction) { RequestKind::Read } else { RequestKind::Write };
        let req = if random {
            let k = (k_dist.sample(&mut rng) + 1).min(d);
            let codeword = rng.random_range(0..tp.store_codewords);
            let offset = rng.random_range(0..=d - k);
            Request { id, kind, class: AccessClass::Random, codeword, offset, chunks: k }
        } else {
            let codeword = cursor;
            cursor = (cursor + 1) % tp.store_codewords;
            Request { id, kind, class: AccessClass::Sequential, codeword, offset: 0, chunks: d }
        };
        requests.push(req);
    }
    Ok(Trace { params: tp.clone(), requests })
}

/// Aggregate traffic of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficStats {
    pub log: AccessEventLog,
    pub useful_user_bytes: u64,
    /// Wire bytes of unprotected bit-planes, included in the log's counters.
    pub bypass_bytes: u64,
    pub requests: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfResult {
    pub utilization: f64,
    pub normalized_utilization: f64,
    pub tokens_per_s: f64,
}

impl PerfResult {
    pub fn from_utilization(utilization: f64) -> Self {
        let normalized_utilization = utilization / IDEAL_UTILIZATION;
        Self {
            utilization,
            normalized_utilization,
            tokens_per_s: BASELINE_TOKENS_PER_S * normalized_utilization,
        }
    }
}

pub fn tokens_per_s(stats: &TrafficStats) -> Result<PerfResult> {
    let wire = stats.log.wire_bytes();
    if wire == 0 {
        return Err(Error::UndefinedUtilization);
    }
    Ok(PerfResult::from_utilization(stats.useful_user_bytes as f64 / wire as f64))
}

/// One row of the per-request event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRow {
    pub request_id: u64,
    pub kind: RequestKind,
    pub class: AccessClass,
    pub k: usize,
    pub crc_failed: bool,
    pub escalated: bool,
    pub decode_ok: bool,
    pub wire_read: u64,
    pub wire_written: u64,
}

pub const EVENT_CSV_HEADER: &str = "request_id,kind,class,k,crc_failed,escalated,decode_ok,wire_read,wire_written";

impl EventRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.request_id,
            self.kind.name(),
            self.class.name(),
            self.k,
            self.crc_failed as u8,
            self.escalated as u8,
            self.decode_ok as u8,
            self.wire_read,
            self.wire_written
        )
    }
}

pub fn events_to_csv(rows: &[EventRow]) -> String {
    let mut out = String::from(EVENT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub stats: TrafficStats,
    pub events: Vec<EventRow>,
}

/// Protected-stream geometry for a user codeword under `pc`. `None` when
/// nothing is protected.
pub fn protected_config(config: &CodewordConfig, pc: &ProtectionConfig) -> Result<Option<CodewordConfig>> {
    let (protected, _) = pc.split_bytes(config.codeword_bytes() as u64);
    let d = (protected as usize).div_ceil(CHUNK_BYTES);
    if d == 0 {
        return Ok(None);
    }
    let cfg = match config.preset().parity_syms(d) {
        Some(_) => CodewordConfig::from_preset(config.preset(), d * CHUNK_BYTES, config.stripe_width())?,
        None => CodewordConfig::new(d, config.parity_syms(), config.stripe_width())?,
    };
    Ok(Some(cfg))
}

struct Harness {
    ctl: Option<Controller>,
    truth: HashMap<usize, Vec<Chunk>>,
    write_seed: u64,
}

impl Harness {
    fn truth(&self, cw: usize) -> Vec<Chunk> {
        match self.truth.get(&cw) {
            Some(t) => t.clone(),
            None => self.ctl.as_ref().expect("protected store").store().initial_data(cw),
        }
    }

    fn fresh_chunks(&self, id: u64, n: usize) -> Vec<Chunk> {
        let mut rng = substream(self.write_seed, StreamLabel::new(WRITE_DATA_LABEL, id));
        let mut out = vec![[0u8; CHUNK_BYTES]; n];
        for c in &mut out {
            rng.fill_bytes(c);
        }
        out
    }

    /// Serve a request against the protected store.
    fn serve(&mut self, req: &Request, offset: usize, k: usize, full: bool) -> Result<RequestOutcome> {
        let cw = req.codeword;
        let mut truth = self.truth(cw);
        let fresh = match req.kind {
            RequestKind::Write => self.fresh_chunks(req.id, k),
            RequestKind::Read => Vec::new(),
        };
        let ctl = self.ctl.as_mut().expect("protected store");
        let (result, expect) = match (req.kind, full) {
            (RequestKind::Read, true) => (ctl.sequential_read(cw, req.id)?, truth),
            (RequestKind::Read, false) => (ctl.random_read(cw, offset, k, req.id)?, truth[offset..offset + k].to_vec()),
            (RequestKind::Write, _) => {
                let outcome = if full {
                    ctl.sequential_write(cw, &fresh)?
                } else {
                    let r = ctl.random_write(cw, offset, &fresh, req.id)?;
                    if r.data != truth[offset..offset + k] && r.outcome.decode_ok {
                        ctl.record_silent_corruption();
                    }
                    r.outcome
                };
                truth[offset..offset + k].copy_from_slice(&fresh);
                let stored = ctl.store_mut().get(cw)?.clone();
                let cfg = ctl.config();
                if stored != ctl.store().codec().build(&truth)? && outcome.decode_ok && !outcome.escalated {
                    // corrupted parity or data slipped past the CRC filter
                    ctl.record_silent_corruption();
                }
                self.truth.insert(cw, stored.data_chunks(&cfg));
                return Ok(outcome);
            }
        };
        if result.data != expect && result.outcome.decode_ok {
            ctl.record_silent_corruption();
        }
        Ok(result.outcome)
    }
}

/// Replay `trace` against a fresh store.
///
/// With a protection config, only the protected share of each request goes
/// through the controller (as a codeword of the protected stream); the
/// bypassed share moves 1:1 on the wire with no checks.
pub fn run_trace(
    trace: &Trace,
    config: &CodewordConfig,
    fc: &FaultConfig,
    policy: SequentialReadPolicy,
    pc: Option<&ProtectionConfig>,
    record_events: bool,
) -> Result<RunOutput> {
    if trace.params.data_chunks != config.data_chunks() {
        return invalid(format!(
            "trace built for {} data chunks, codeword has {}",
            trace.params.data_chunks,
            config.data_chunks()
        ));
    }
    let stored_cfg = match pc {
        None => Some(*config),
        Some(pc) => protected_config(config, pc)?,
    };
    let content = Content::Seeded(fc.master_seed());
    let mut harness = Harness {
        ctl: stored_cfg.map(|c| {
            Controller::new(Store::new(c, trace.params.store_codewords, content), *fc, policy)
        }),
        truth: HashMap::new(),
        write_seed: fc.master_seed(),
    };
    let mut out = RunOutput::default();
    let mut bypass_log = AccessEventLog::default();
    for req in &trace.requests {
        if req.codeword >= trace.params.store_codewords || req.offset + req.chunks > config.data_chunks() {
            return invalid(format!("request {} outside the store", req.id));
        }
        let user_bytes = (req.chunks * CHUNK_BYTES) as u64;
        let full = req.class == AccessClass::Sequential;
        let (bypass, outcome) = match (pc, stored_cfg) {
            (None, _) => (0, harness.serve(req, req.offset, req.chunks, full)?),
            (Some(pc), None) => (pc.split_bytes(user_bytes).1, RequestOutcome { decode_ok: true, ..Default::default() }),
            (Some(pc), Some(pcfg)) => {
                let (prot, bypass) = pc.split_bytes(user_bytes);
                let dp = pcfg.data_chunks();
                let (offset, k) = if full {
                    (0, dp)
                } else {
                    let k = (prot as usize).div_ceil(CHUNK_BYTES).clamp(1, dp);
                    let start = pc.split_bytes((req.offset * CHUNK_BYTES) as u64).0 as usize / CHUNK_BYTES;
                    (start.min(dp - k), k)
                };
                (bypass, harness.serve(req, offset, k, full)?)
            }
        };
        match req.kind {
            RequestKind::Read => bypass_log.wire_bytes_read += bypass,
            RequestKind::Write => bypass_log.wire_bytes_written += bypass,
        }
        out.stats.useful_user_bytes += user_bytes;
        out.stats.bypass_bytes += bypass;
        out.stats.requests += 1;
        if record_events {
            let (br, bw) = match req.kind {
                RequestKind::Read => (bypass, 0),
                RequestKind::Write => (0, bypass),
            };
            out.events.push(EventRow {
                request_id: req.id,
                kind: req.kind,
                class: req.class,
                k: req.chunks,
                crc_failed: outcome.crc_failed,
                escalated: outcome.escalated,
                decode_ok: outcome.decode_ok,
                wire_read: outcome.wire_read + br,
                wire_written: outcome.wire_written + bw,
            });
        }
    }
    let mut log = harness.ctl.as_ref().map(|c| *c.log()).unwrap_or_default();
    log.merge(&bypass_log);
    out.stats.log = log;
    Ok(out)
}

/// Which bits of BF16 data go through the ECC pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtectionMode {
    Full,
    ExponentOnly,
    SignExponent,
    Unprotected,
}

impl ProtectionMode {
    pub fn name(self) -> &'static str {
        match self {
            ProtectionMode::Full => "full",
            ProtectionMode::ExponentOnly => "exponent_only",
            ProtectionMode::SignExponent => "sign_exponent",
            ProtectionMode::Unprotected => "none",
        }
    }

    /// `None` means every bit is protected and no plane split happens.
    pub fn config(self) -> Option<ProtectionConfig> {
        match self {
            ProtectionMode::Full => None,
            ProtectionMode::ExponentOnly => Some(ProtectionConfig::bf16(&[Bf16Field::Exponent])),
            ProtectionMode::SignExponent => Some(ProtectionConfig::bf16(&[Bf16Field::Sign, Bf16Field::Exponent])),
            ProtectionMode::Unprotected => Some(ProtectionConfig::bf16(&[])),
        }
    }

    pub fn gamma(self) -> f64 {
        self.config().map_or(1.0, |c| c.gamma())
    }
}

impl fmt::Display for ProtectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ProtectionMode::Full),
            "exponent_only" => Ok(ProtectionMode::ExponentOnly),
            "sign_exponent" => Ok(ProtectionMode::SignExponent),
            "none" => Ok(ProtectionMode::Unprotected),
            other => invalid(format!("unknown protection mode {other:?}")),
        }
    }
}

/// A fully specified simulation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub preset: Preset,
    pub codeword_bytes: usize,
    pub ber: f64,
    pub seq_ratio: f64,
    pub read_fraction: f64,
    pub policy: SequentialReadPolicy,
    pub protection: ProtectionMode,
    pub seed: u64,
    pub requests: usize,
    pub store_codewords: usize,
    pub k_weights: [f64; 4],
    pub stripe_width: usize,
}

impl Scenario {
    pub fn new(preset: Preset, codeword_bytes: usize, ber: f64, seq_ratio: f64) -> Self {
        Self {
            preset,
            codeword_bytes,
            ber,
            seq_ratio,
            read_fraction: 1.0,
            policy: SequentialReadPolicy::CrcFirst,
            protection: ProtectionMode::Full,
            seed: 1,
            requests: 100_000,
            store_codewords: DEFAULT_STORE_CODEWORDS,
            k_weights: [0.25; 4],
            stripe_width: 16,
        }
    }

    pub fn codeword_config(&self) -> Result<CodewordConfig> {
        CodewordConfig::from_preset(self.preset, self.codeword_bytes, self.stripe_width)
    }

    pub fn trace_params(&self) -> Result<TraceParams> {
        Ok(TraceParams {
            request_count: self.requests,
            seq_ratio: self.seq_ratio,
            k_weights: self.k_weights,
            read_fraction: self.read_fraction,
            seed: self.seed,
            store_codewords: self.store_codewords,
            data_chunks: self.codeword_config()?.data_chunks(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub config: CodewordConfig,
    pub stats: TrafficStats,
    pub perf: PerfResult,
    pub events: Vec<EventRow>,
}

pub fn run_scenario(s: &Scenario, record_events: bool) -> Result<ScenarioResult> {
    let config = s.codeword_config()?;
    let trace = gen_trace(&s.trace_params()?)?;
    let fc = FaultConfig::new(s.ber, s.seed)?;
    let pc = s.protection.config();
    let out = run_trace(&trace, &config, &fc, s.policy, pc.as_ref(), record_events)?;
    let perf = tokens_per_s(&out.stats)?;
    Ok(ScenarioResult { scenario: s.clone(), config, stats: out.stats, perf, events: out.events })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escalation_probabilities() {
        assert!((p_escalate(1e-4, 1) - 0.026_834_734_85).abs() < 1e-10);
        assert!((p_escalate(1e-4, 4) - 0.103_095_097_98).abs() < 1e-10);
        assert_eq!(p_escalate(0.0, 3), 0.0);
    }

    /// Direct upper-tail sum with exact binomial coefficients in f64, usable
    /// where no term underflows.
    fn tail_oracle(n: u64, t: u64, ps: f64) -> f64 {
        let mut total = 0.0;
        let mut coef = 1.0f64;
        for j in 0..=n {
            if j > 0 {
                coef *= (n - j + 1) as f64 / j as f64;
            }
            if j > t {
                total += coef * ps.powi(j as i32) * (1.0 - ps).powi((n - j) as i32);
            }
        }
        total
    }

    #[test]
    fn failure_rate_matches_direct_sum() {
        for (preset, size) in [(Preset::Rate16_17, 64), (Preset::FixedParity, 256), (Preset::Rate16_17, 512)] {
            let cfg = CodewordConfig::from_preset(preset, size, 16).unwrap();
            let n = (16 * cfg.data_chunks() + cfg.parity_syms()) as u64;
            for p in [1e-3, 3e-3, 1e-2] {
                let ps = 1.0 - (1.0f64 - p).powi(16);
                let want = tail_oracle(n, cfg.t() as u64, ps);
                let got = decode_failure_rate(p, &cfg);
                assert!((got / want - 1.0).abs() < 1e-9, "{preset} {size} {p}: {got} vs {want}");
            }
        }
        let cfg = CodewordConfig::from_preset(Preset::Rate16_17, 512, 16).unwrap();
        assert_eq!(decode_failure_rate(0.0, &cfg), 0.0);
    }

    #[test]
    fn failure_rate_falls_with_more_parity() {
        // same total length, growing t
        let a = CodewordConfig::new(8, 8, 16).unwrap();
        let b = CodewordConfig::new(8, 10, 16).unwrap();
        let c = CodewordConfig::new(8, 12, 16).unwrap();
        for p in [1e-6, 1e-4, 1e-2] {
            let (fa, fb, fc) =
                (decode_failure_rate(p, &a), decode_failure_rate(p, &b), decode_failure_rate(p, &c));
            assert!(fa > fb && fb > fc, "{p}: {fa} {fb} {fc}");
        }
    }

    #[test]
    fn large_codewords_fail_far_less() {
        let small = CodewordConfig::from_preset(Preset::Rate16_17, 64, 16).unwrap();
        let large = CodewordConfig::from_preset(Preset::Rate16_17, 2048, 16).unwrap();
        let ratio = ln_decode_failure_rate(1e-4, &small) - ln_decode_failure_rate(1e-4, &large);
        assert!(ratio / std::f64::consts::LN_10 > 5.0);
    }

    #[test]
    fn tolerable_ber_inverts_failure_rate() {
        let cfg = CodewordConfig::from_preset(Preset::Rate16_17, 512, 16).unwrap();
        let p = tolerable_ber(&cfg, 1e-12);
        assert!((decode_failure_rate(p, &cfg) / 1e-12 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sequential_trace_walks_the_store() {
        let mut tp = TraceParams::new(100, 1.0, 8, 3);
        tp.store_codewords = 16;
        let t = gen_trace(&tp).unwrap();
        for (i, r) in t.requests.iter().enumerate() {
            assert_eq!(r.class, AccessClass::Sequential);
            assert_eq!(r.codeword, i % 16);
            assert_eq!((r.offset, r.chunks), (0, 8));
        }
    }

    #[test]
    fn random_k_histogram_follows_weights() {
        let mut tp = TraceParams::new(40_000, 0.0, 16, 4);
        tp.k_weights = [0.1, 0.2, 0.3, 0.4];
        let t = gen_trace(&tp).unwrap();
        let mut hist = [0u64; 4];
        for r in &t.requests {
            assert_eq!(r.class, AccessClass::Random);
            assert!(r.offset + r.chunks <= 16);
            hist[r.chunks - 1] += 1;
        }
        let n = tp.request_count as f64;
        for (h, w) in hist.iter().zip(tp.k_weights) {
            let sigma = (n * w * (1.0 - w)).sqrt();
            assert!((*h as f64 - n * w).abs() <= 3.0 * sigma, "{hist:?}");
        }
    }

    #[test]
    fn chunk_level_mix_matches_seq_ratio() {
        let tp = TraceParams::new(200_000, 0.9, 64, 5);
        let t = gen_trace(&tp).unwrap();
        let (mut seq, mut total) = (0u64, 0u64);
        for r in &t.requests {
            total += r.chunks as u64;
            if r.class == AccessClass::Sequential {
                seq += r.chunks as u64;
            }
        }
        let frac = seq as f64 / total as f64;
        assert!((frac - 0.9).abs() < 0.005, "{frac}");
    }

    #[test]
    fn trace_is_deterministic() {
        let tp = TraceParams::new(1000, 0.5, 8, 9);
        assert_eq!(gen_trace(&tp).unwrap().to_csv(), gen_trace(&tp).unwrap().to_csv());
        let mut other = tp.clone();
        other.seed = 10;
        assert_ne!(gen_trace(&tp).unwrap().to_csv(), gen_trace(&other).unwrap().to_csv());
    }

    #[test]
    fn trace_params_validation() {
        let mut tp = TraceParams::new(10, 1.5, 8, 1);
        assert!(gen_trace(&tp).is_err());
        tp.seq_ratio = 0.5;
        tp.k_weights = [0.5, 0.5, 0.5, 0.0];
        assert!(gen_trace(&tp).is_err());
        tp.k_weights = [1.0, 0.0, 0.0, 0.0];
        tp.read_fraction = -0.1;
        assert!(gen_trace(&tp).is_err());
    }

    #[test]
    fn throughput_model() {
        let ideal = PerfResult::from_utilization(IDEAL_UTILIZATION);
        assert!((ideal.tokens_per_s - 18.51).abs() < 1e-12);
        let half = PerfResult::from_utilization(IDEAL_UTILIZATION / 2.0);
        assert!((half.tokens_per_s - 9.255).abs() < 1e-12);
        assert_eq!(tokens_per_s(&TrafficStats::default()), Err(Error::UndefinedUtilization));
    }

    #[test]
    fn error_free_sequential_run_is_ideal() {
        let mut s = Scenario::new(Preset::FixedParity, 512, 0.0, 1.0);
        s.requests = 2_000;
        let r = run_scenario(&s, false).unwrap();
        assert_eq!(r.perf.utilization, IDEAL_UTILIZATION);
        assert!((r.perf.tokens_per_s - 18.51).abs() < 1e-9);
        assert_eq!(r.stats.log.escalations, 0);
    }

    #[test]
    fn exponent_only_splits_traffic() {
        let mut s = Scenario::new(Preset::FixedParity, 512, 0.0, 1.0);
        s.requests = 100;
        s.protection = ProtectionMode::ExponentOnly;
        let r = run_scenario(&s, false).unwrap();
        // 256 protected bytes as 8 units, 256 bypass bytes
        assert_eq!(r.stats.bypass_bytes, 100 * 256);
        assert_eq!(r.stats.log.wire_bytes_read, 100 * (8 * 34 + 256));
        assert_eq!(protected_config(&r.config, &s.protection.config().unwrap()).unwrap().unwrap().data_chunks(), 8);
    }

    #[test]
    fn unprotected_mode_is_pure_bypass() {
        let mut s = Scenario::new(Preset::FixedParity, 256, 1e-3, 0.9);
        s.requests = 500;
        s.protection = ProtectionMode::Unprotected;
        let r = run_scenario(&s, false).unwrap();
        assert_eq!(r.perf.utilization, 1.0);
        assert_eq!(r.stats.log.escalations, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut s = Scenario::new(Preset::Rate16_17, 256, 1e-3, 0.8);
        s.requests = 3_000;
        s.read_fraction = 0.7;
        let a = run_scenario(&s, true).unwrap();
        let b = run_scenario(&s, true).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(events_to_csv(&a.events), events_to_csv(&b.events));
        let wr: u64 = a.events.iter().map(|e| e.wire_read).sum();
        assert_eq!(wr, a.stats.log.wire_bytes_read);
    }

    #[test]
    fn trace_shape_must_match_config() {
        let tp = TraceParams::new(10, 1.0, 8, 1);
        let t = gen_trace(&tp).unwrap();
        let cfg = CodewordConfig::from_preset(Preset::FixedParity, 512, 16).unwrap();
        let fc = FaultConfig::error_free(1);
        assert!(run_trace(&t, &cfg, &fc, SequentialReadPolicy::CrcFirst, None, false).is_err());
    }
}
