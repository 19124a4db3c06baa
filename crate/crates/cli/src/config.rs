//! Experiment config files.
//!
//! Configs are TOML with a fixed, flat set of keys. Every list key is a grid
//! axis; the experiment runs the cartesian product. Parsing collects every
//! problem it finds so a broken file is reported in one pass.

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use hbmecc::bitplane::Bf16Field;
use hbmecc::controller::SequentialReadPolicy;
use hbmecc::layout::{Preset, MAX_STRIPE_WIDTH};
use hbmecc::perf::{ProtectionMode, DEFAULT_STORE_CODEWORDS};
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    FailureCurve,
    SweepCodeword,
    SweepRandomRatio,
    AdaptiveBandwidth,
    BitfieldSweep,
    SingleRun,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::FailureCurve,
        Experiment::SweepCodeword,
        Experiment::SweepRandomRatio,
        Experiment::AdaptiveBandwidth,
        Experiment::BitfieldSweep,
        Experiment::SingleRun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::FailureCurve => "failure_curve",
            Experiment::SweepCodeword => "sweep_codeword",
            Experiment::SweepRandomRatio => "sweep_random_ratio",
            Experiment::AdaptiveBandwidth => "adaptive_bandwidth",
            Experiment::BitfieldSweep => "bitfield_sweep",
            Experiment::SingleRun => "single_run",
        }
    }

    fn is_simulation(self) -> bool {
        !matches!(self, Experiment::FailureCurve | Experiment::BitfieldSweep)
    }

    /// Keys that must be present.
    fn required(self) -> &'static [&'static str] {
        match self {
            Experiment::FailureCurve => &["ber", "codeword_bytes"],
            Experiment::SweepCodeword | Experiment::AdaptiveBandwidth | Experiment::SingleRun => {
                &["ber", "codeword_bytes"]
            }
            Experiment::SweepRandomRatio => &["ber", "codeword_bytes", "seq_ratio"],
            Experiment::BitfieldSweep => &["rates"],
        }
    }

    /// Keys the experiment accepts besides `experiment`, `seed` and `output`.
    fn allowed(self) -> &'static [&'static str] {
        const SIM: &[&str] = &[
            "ber",
            "codeword_bytes",
            "seq_ratio",
            "preset",
            "policy",
            "protection",
            "read_fraction",
            "requests",
            "store_codewords",
            "k_weights",
            "stripe_width",
        ];
        const SINGLE: &[&str] = &[
            "ber",
            "codeword_bytes",
            "seq_ratio",
            "preset",
            "policy",
            "protection",
            "read_fraction",
            "requests",
            "store_codewords",
            "k_weights",
            "stripe_width",
            "event_log",
        ];
        match self {
            Experiment::FailureCurve => &["ber", "codeword_bytes", "preset"],
            Experiment::BitfieldSweep => &["rates", "fields", "values"],
            Experiment::SingleRun => SINGLE,
            _ => SIM,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw file contents with source spans for diagnostics.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Spanned<String>>,
    seed: Option<Spanned<u64>>,
    output: Option<Spanned<String>>,
    ber: Option<Spanned<Vec<f64>>>,
    codeword_bytes: Option<Spanned<Vec<u64>>>,
    seq_ratio: Option<Spanned<Vec<f64>>>,
    preset: Option<Spanned<Vec<String>>>,
    policy: Option<Spanned<Vec<String>>>,
    protection: Option<Spanned<Vec<String>>>,
    read_fraction: Option<Spanned<Vec<f64>>>,
    requests: Option<Spanned<u64>>,
    store_codewords: Option<Spanned<u64>>,
    k_weights: Option<Spanned<Vec<f64>>>,
    stripe_width: Option<Spanned<u64>>,
    event_log: Option<Spanned<String>>,
    rates: Option<Spanned<Vec<f64>>>,
    fields: Option<Spanned<Vec<String>>>,
    values: Option<Spanned<u64>>,
}

/// A validated config with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(flatten)]
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Grid {
    Failure(FailureGrid),
    Sim(SimGrid),
    Bitfield(BitfieldGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureGrid {
    pub ber: Vec<f64>,
    pub codeword_bytes: Vec<usize>,
    #[serde(serialize_with = "ser_names")]
    pub preset: Vec<Preset>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimGrid {
    pub ber: Vec<f64>,
    pub codeword_bytes: Vec<usize>,
    pub seq_ratio: Vec<f64>,
    #[serde(serialize_with = "ser_names")]
    pub preset: Vec<Preset>,
    #[serde(serialize_with = "ser_names")]
    pub policy: Vec<SequentialReadPolicy>,
    #[serde(serialize_with = "ser_names")]
    pub protection: Vec<ProtectionMode>,
    pub read_fraction: Vec<f64>,
    pub requests: usize,
    pub store_codewords: usize,
    pub k_weights: [f64; 4],
    pub stripe_width: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitfieldGrid {
    pub rates: Vec<f64>,
    #[serde(serialize_with = "ser_names")]
    pub fields: Vec<Bf16Field>,
    pub values: usize,
}

fn ser_names<T: fmt::Display, S: serde::Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl ExperimentConfig {
    /// Canonical TOML form, used by `--print-config`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// One problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    /// True when some diagnostic names `key`.
    pub fn mentions(&self, key: &str) -> bool {
        self.diagnostics.iter().any(|d| d.key.as_deref() == Some(key))
    }
}

struct Checker<'a> {
    text: &'a str,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn line_of(&self, span: &Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn report(&mut self, key: &str, span: Option<&Range<usize>>, message: impl Into<String>) {
        let line = span.map(|s| self.line_of(s));
        self.diags.push(Diagnostic { line, key: Some(key.to_string()), message: message.into() });
    }

    fn list<T: Clone>(&mut self, key: &str, v: &Option<Spanned<Vec<T>>>, default: &[T]) -> Vec<T> {
        match v {
            None => default.to_vec(),
            Some(s) if s.get_ref().is_empty() => {
                self.report(key, Some(&s.span()), "list must not be empty");
                Vec::new()
            }
            Some(s) => s.get_ref().clone(),
        }
    }

    fn unit_range(&mut self, key: &str, v: &Option<Spanned<Vec<f64>>>, default: &[f64]) -> Vec<f64> {
        let out = self.list(key, v, default);
        for x in &out {
            if !(0.0..=1.0).contains(x) {
                let span = v.as_ref().map(|s| s.span());
                self.report(key, span.as_ref(), format!("{x} is outside [0, 1]"));
            }
        }
        out
    }

    fn parsed<T: FromStr>(&mut self, key: &str, v: &Option<Spanned<Vec<String>>>, default: &[&str]) -> Vec<T>
    where
        T::Err: fmt::Display,
    {
        let names: Vec<String> = match v {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(_) => self.list(key, v, &[]),
        };
        let span = v.as_ref().map(|s| s.span());
        let mut out = Vec::new();
        for n in names {
            match n.parse::<T>() {
                Ok(x) => out.push(x),
                Err(e) => self.report(key, span.as_ref(), e.to_string()),
            }
        }
        out
    }

    fn count(&mut self, key: &str, v: &Option<Spanned<u64>>, default: u64, min: u64, max: u64) -> usize {
        match v {
            None => default as usize,
            Some(s) => {
                let x = *s.get_ref();
                if !(min..=max).contains(&x) {
                    self.report(key, Some(&s.span()), format!("{x} is outside {min}..={max}"));
                }
                x as usize
            }
        }
    }
}

/// Keys present in the raw file, with their spans.
fn present(raw: &RawConfig) -> Vec<(&'static str, Range<usize>)> {
    let mut out = Vec::new();
    macro_rules! keys {
        ($($k:ident),*) => {
            $(if let Some(s) = &raw.$k { out.push((stringify!($k), s.span())); })*
        };
    }
    keys!(
        ber,
        codeword_bytes,
        seq_ratio,
        preset,
        policy,
        protection,
        read_fraction,
        requests,
        store_codewords,
        k_weights,
        stripe_width,
        event_log,
        rates,
        fields,
        values
    );
    out
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError { diagnostics: vec![Diagnostic { line, key: None, message: e.message().trim().to_string() }] }
    })?;
    let mut c = Checker { text, diags: Vec::new() };

    let experiment = match &raw.experiment {
        None => {
            c.report("experiment", None, "missing required key");
            None
        }
        Some(s) => {
            let found = Experiment::ALL.iter().find(|e| e.name() == s.get_ref());
            if found.is_none() {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                c.report(
                    "experiment",
                    Some(&s.span()),
                    format!("unknown experiment {:?}; expected one of {}", s.get_ref(), names.join(", ")),
                );
            }
            found.copied()
        }
    };
    let Some(experiment) = experiment else {
        return Err(ConfigError { diagnostics: c.diags });
    };

    let keys = present(&raw);
    for key in experiment.required() {
        if !keys.iter().any(|(k, _)| k == key) {
            c.report(key, None, format!("missing required key for {experiment}"));
        }
    }
    for (key, span) in &keys {
        if !experiment.allowed().contains(key) {
            c.report(key, Some(span), format!("not used by {experiment}"));
        }
    }

    let seed = raw.seed.as_ref().map_or(1, |s| *s.get_ref());
    let output = raw.output.as_ref().map(|s| PathBuf::from(s.get_ref()));

    let sizes = |c: &mut Checker, v: &Option<Spanned<Vec<u64>>>| -> Vec<usize> {
        let out: Vec<u64> = c.list("codeword_bytes", v, &[]);
        for x in &out {
            if *x == 0 || x % 32 != 0 || *x > 32 * 4096 {
                let span = v.as_ref().map(|s| s.span());
                c.report("codeword_bytes", span.as_ref(), format!("{x} is not a multiple of 32 in 32..=131072"));
            }
        }
        out.into_iter().map(|x| x as usize).collect()
    };

    let grid = match experiment {
        Experiment::FailureCurve => Grid::Failure(FailureGrid {
            ber: c.unit_range("ber", &raw.ber, &[]),
            codeword_bytes: sizes(&mut c, &raw.codeword_bytes),
            preset: c.parsed("preset", &raw.preset, &["rate16_17"]),
        }),
        Experiment::BitfieldSweep => Grid::Bitfield(BitfieldGrid {
            rates: c.unit_range("rates", &raw.rates, &[]),
            fields: c.parsed("fields", &raw.fields, &["sign", "exponent", "mantissa"]),
            values: c.count("values", &raw.values, 1_000_000, 1, 100_000_000),
        }),
        _ => {
            debug_assert!(experiment.is_simulation());
            let k_weights = match &raw.k_weights {
                None => [0.25; 4],
                Some(s) => {
                    let v = s.get_ref();
                    let ok = v.len() == 4
                        && v.iter().all(|w| w.is_finite() && *w >= 0.0)
                        && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
                    if !ok {
                        c.report("k_weights", Some(&s.span()), "need four non-negative weights summing to 1");
                        [0.25; 4]
                    } else {
                        [v[0], v[1], v[2], v[3]]
                    }
                }
            };
            let default_protection: &[&str] =
                if experiment == Experiment::AdaptiveBandwidth { &["full", "exponent_only"] } else { &["full"] };
            let grid = SimGrid {
                ber: c.unit_range("ber", &raw.ber, &[]),
                codeword_bytes: sizes(&mut c, &raw.codeword_bytes),
                seq_ratio: c.unit_range("seq_ratio", &raw.seq_ratio, &[0.99]),
                preset: c.parsed("preset", &raw.preset, &["fixed_parity"]),
                policy: c.parsed("policy", &raw.policy, &["crc_first"]),
                protection: c.parsed("protection", &raw.protection, default_protection),
                read_fraction: c.unit_range("read_fraction", &raw.read_fraction, &[1.0]),
                requests: c.count("requests", &raw.requests, 100_000, 1, 1 << 32),
                store_codewords: c.count(
                    "store_codewords",
                    &raw.store_codewords,
                    DEFAULT_STORE_CODEWORDS as u64,
                    1,
                    1 << 24,
                ),
                k_weights,
                stripe_width: c.count("stripe_width", &raw.stripe_width, 16, 1, MAX_STRIPE_WIDTH as u64),
                event_log: raw.event_log.as_ref().map(|s| PathBuf::from(s.get_ref())),
            };
            if experiment == Experiment::SingleRun && grid.point_count() > 1 {
                c.report("experiment", None, format!("single_run needs exactly one grid point, got {}", grid.point_count()));
            }
            if grid.preset.contains(&Preset::Custom) {
                let span = raw.preset.as_ref().map(|s| s.span());
                c.report("preset", span.as_ref(), "custom geometries are not available from configs");
            }
            Grid::Sim(grid)
        }
    };
    if let Grid::Failure(g) = &grid {
        if g.preset.contains(&Preset::Custom) {
            let span = raw.preset.as_ref().map(|s| s.span());
            c.report("preset", span.as_ref(), "custom geometries are not available from configs");
        }
    }

    if c.diags.is_empty() {
        Ok(ExperimentConfig { experiment, seed, output, grid })
    } else {
        Err(ConfigError { diagnostics: c.diags })
    }
}

impl SimGrid {
    pub fn point_count(&self) -> usize {
        self.ber.len()
            * self.codeword_bytes.len()
            * self.seq_ratio.len()
            * self.preset.len()
            * self.policy.len()
            * self.protection.len()
            * self.read_fraction.len()
    }
}
