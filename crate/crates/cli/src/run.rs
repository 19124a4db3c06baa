//! Grid expansion, execution and CSV rendering.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use hbmecc::bitplane::{field_flip_stats, random_bf16_normals};
use hbmecc::fault::{substream, StreamLabel};
use hbmecc::layout::CodewordConfig;
use hbmecc::perf::{
    events_to_csv, ln_decode_failure_rate, run_scenario, Scenario, ScenarioResult,
};
use rayon::prelude::*;

use crate::config::{BitfieldGrid, ExperimentConfig, FailureGrid, Grid, SimGrid};
use crate::fmt::g6;

pub const RESULTS_HEADER: &str = "preset,codeword_bytes,d,q,ber,seq_ratio,read_fraction,policy,protection,seed,requests,wire_read,wire_written,useful_bytes,escalations,rs_decodes,decode_failures,silent_corruptions,utilization,norm_utilization,tokens_per_s";
pub const FAILURE_HEADER: &str = "preset,codeword_bytes,d,q,t,ber,failure_rate,log10_failure_rate";
pub const BITFIELD_HEADER: &str = "field,rate,seed,flipped_bits,values_changed,max_rel_err,mean_rel_err,blowup_count";

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub csv: String,
    /// Per-request log for `single_run` when requested.
    pub event_log: Option<String>,
}

/// Run `cfg` on `jobs` worker threads (all cores when `None`).
pub fn run_config(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Output> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().context("starting worker pool")?;
    pool.install(|| match &cfg.grid {
        Grid::Failure(g) => Ok(Output { csv: failure_curve(g)?, event_log: None }),
        Grid::Bitfield(g) => Ok(Output { csv: bitfield_sweep(g, cfg.seed)?, event_log: None }),
        Grid::Sim(g) => simulate(g, cfg.seed),
    })
}

fn failure_curve(g: &FailureGrid) -> Result<String> {
    let mut rows = Vec::new();
    for &preset in &g.preset {
        for &size in &g.codeword_bytes {
            let cfg = CodewordConfig::from_preset(preset, size, 16)?;
            for &ber in &g.ber {
                rows.push((preset, size, ber, cfg));
            }
        }
    }
    rows.sort_by(|a, b| a.0.id().cmp(&b.0.id()).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut out = String::from(FAILURE_HEADER);
    out.push('\n');
    for (preset, size, ber, cfg) in rows {
        let ln = ln_decode_failure_rate(ber, &cfg);
        out.push_str(&format!(
            "{preset},{size},{},{},{},{},{},{}\n",
            cfg.data_chunks(),
            cfg.parity_syms(),
            cfg.t(),
            g6(ber),
            g6(ln.exp()),
            g6(ln / std::f64::consts::LN_10)
        ));
    }
    Ok(out)
}

fn bitfield_sweep(g: &BitfieldGrid, seed: u64) -> Result<String> {
    let values = random_bf16_normals(&mut substream(seed, StreamLabel::new(u64::MAX - 3, 0)), g.values);
    let mut points: Vec<_> = g.fields.iter().flat_map(|&f| g.rates.iter().map(move |&r| (f, r))).collect();
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let rows: Vec<String> = points
        .par_iter()
        .map(|&(field, rate)| -> Result<String> {
            let s = field_flip_stats(&values, field, rate, seed)?;
            Ok(format!(
                "{field},{},{seed},{},{},{},{},{}\n",
                g6(rate),
                s.flipped_bits,
                s.values_changed,
                g6(s.max_relative_error),
                g6(s.mean_relative_error),
                s.blowup_count
            ))
        })
        .collect::<Result<_>>()?;
    Ok(std::iter::once(format!("{BITFIELD_HEADER}\n")).chain(rows).collect())
}

/// Grid points of a simulation sweep, in output order.
pub fn scenarios(g: &SimGrid, seed: u64) -> Vec<Scenario> {
    let mut out = Vec::with_capacity(g.point_count());
    for &preset in &g.preset {
        for &size in &g.codeword_bytes {
            for &ber in &g.ber {
                for &seq in &g.seq_ratio {
                    for &rf in &g.read_fraction {
                        for &policy in &g.policy {
                            for &protection in &g.protection {
                                let mut s = Scenario::new(preset, size, ber, seq);
                                s.read_fraction = rf;
                                s.policy = policy;
                                s.protection = protection;
                                s.seed = seed;
                                s.requests = g.requests;
                                s.store_codewords = g.store_codewords;
                                s.k_weights = g.k_weights;
                                s.stripe_width = g.stripe_width;
                                out.push(s);
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_by(scenario_order);
    out
}

fn scenario_order(a: &Scenario, b: &Scenario) -> Ordering {
    a.preset
        .id()
        .cmp(&b.preset.id())
        .then(a.codeword_bytes.cmp(&b.codeword_bytes))
        .then(a.ber.total_cmp(&b.ber))
        .then(a.seq_ratio.total_cmp(&b.seq_ratio))
        .then(a.read_fraction.total_cmp(&b.read_fraction))
        .then(a.policy.cmp(&b.policy))
        .then(a.protection.cmp(&b.protection))
}

fn simulate(g: &SimGrid, seed: u64) -> Result<Output> {
    let points = scenarios(g, seed);
    let want_events = g.event_log.is_some();
    let results: Vec<ScenarioResult> = points
        .par_iter()
        .map(|s| run_scenario(s, want_events).with_context(|| format!("running {} at {}B", s.preset, s.codeword_bytes)))
        .collect::<Result<_>>()?;
    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');
    for r in &results {
        csv.push_str(&result_row(r));
        csv.push('\n');
    }
    let event_log = want_events.then(|| events_to_csv(&results[0].events));
    Ok(Output { csv, event_log })
}

pub fn result_row(r: &ScenarioResult) -> String {
    let s = &r.scenario;
    let log = &r.stats.log;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.preset,
        s.codeword_bytes,
        r.config.data_chunks(),
        r.config.parity_syms(),
        g6(s.ber),
        g6(s.seq_ratio),
        g6(s.read_fraction),
        s.policy,
        s.protection,
        s.seed,
        r.stats.requests,
        log.wire_bytes_read,
        log.wire_bytes_written,
        r.stats.useful_user_bytes,
        log.escalations,
        log.rs_decodes,
        log.rs_decode_failures,
        log.silent_corruptions,
        g6(r.perf.utilization),
        g6(r.perf.normalized_utilization),
        g6(r.perf.tokens_per_s)
    )
}

/// Write `contents` to `path` through a temporary sibling and a rename, so
/// a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn sim_rows_come_out_sorted() {
        let cfg = parse_config(
            "experiment = \"sweep_codeword\"\nber = [1e-3, 1e-9]\ncodeword_bytes = [256, 64]\nrequests = 200\nstore_codewords = 64\n",
        )
        .unwrap();
        let out = run_config(&cfg, Some(2)).unwrap();
        let keys: Vec<(String, String)> = out
            .csv
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<_> = l.split(',').collect();
                (f[1].to_string(), f[4].to_string())
            })
            .collect();
        assert_eq!(
            keys,
            [("64", "1e-09"), ("64", "0.001"), ("256", "1e-09"), ("256", "0.001")]
                .map(|(a, b)| (a.to_string(), b.to_string()))
        );
    }

    #[test]
    fn failure_curve_header_and_rows() {
        let cfg = parse_config("experiment = \"failure_curve\"\nber = [1e-4]\ncodeword_bytes = [64]\n").unwrap();
        let out = run_config(&cfg, Some(1)).unwrap();
        let mut lines = out.csv.lines();
        assert_eq!(lines.next(), Some(FAILURE_HEADER));
        assert!(lines.next().unwrap().starts_with("rate16_17,64,2,2,1,0.0001,"));
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.csv");
        write_atomic(&path, "a\n").unwrap();
        write_atomic(&path, "b\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "b\n");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
