use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hbmecc_cli::{parse_config, run_config, write_atomic};

/// Run an hbmecc experiment described by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "hbmecc", version)]
struct Args {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the validated config with defaults filled in, then exit.
    #[arg(long)]
    print_config: bool,
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", args.config.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            for d in &e.diagnostics {
                eprintln!("{}: {d}", args.config.display());
            }
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    if args.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(out_path) = cfg.output.clone() else {
        eprintln!("{}: no output path; set `output` or pass --out", args.config.display());
        return ExitCode::from(CONFIG_ERROR);
    };
    if args.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(CONFIG_ERROR);
    }
    let result = run_config(&cfg, args.jobs).and_then(|out| {
        write_atomic(&out_path, &out.csv)?;
        if let (Some(path), Some(log)) = (event_log_path(&cfg), out.event_log) {
            write_atomic(&path, &log)?;
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}

fn event_log_path(cfg: &hbmecc_cli::ExperimentConfig) -> Option<PathBuf> {
    match &cfg.grid {
        hbmecc_cli::config::Grid::Sim(g) => g.event_log.clone(),
        _ => None,
    }
}
