use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hbmecc"))
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn print_config_matches_golden_for_every_bundled_config() {
    let mut checked = 0;
    for entry in fs::read_dir(manifest_dir().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let out = run(&["--config", path.to_str().unwrap(), "--print-config"]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let golden = fs::read_to_string(manifest_dir().join("tests/golden").join(format!("{name}.toml"))).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), golden, "{name}");
        checked += 1;
    }
    assert_eq!(checked, 6);
}

#[test]
fn config_errors_exit_with_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"sweep_codeword\"\ncodeword_bytes = [64]\n");
    let out = run(&["--config", &cfg, "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`ber`"));

    let cfg = write_config(dir.path(), "experiment = \"sweep_codeword\"\ncodeword_bytes = [64]\nber = [1.5]\n");
    let out = run(&["--config", &cfg, "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("outside [0, 1]"), "{err}");

    let out = run(&["--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_output_path_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"failure_curve\"\nber = [1e-4]\ncodeword_bytes = [64]\n");
    assert_eq!(run(&["--config", &cfg]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "experiment = \"failure_curve\"\nber = [1e-4]\ncodeword_bytes = [64]\n");
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let target = blocker.join("out.csv");
    let out = run(&["--config", &cfg, "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_override_and_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.csv");
    let cfg = write_config(
        dir.path(),
        &format!(
            "experiment = \"single_run\"\nber = [1e-3]\ncodeword_bytes = [256]\nseq_ratio = [0.5]\nread_fraction = [0.5]\nrequests = 300\nstore_codewords = 32\nevent_log = {:?}\n",
            events.to_str().unwrap()
        ),
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, seed) in [(&a, "5"), (&b, "6")] {
        let out = run(&["--config", &cfg, "--out", path.to_str().unwrap(), "--seed", seed, "--jobs", "2"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (fs::read_to_string(a).unwrap(), fs::read_to_string(b).unwrap());
    assert_ne!(a, b);
    assert!(a.lines().nth(1).unwrap().contains(",5,300,"));
    let log = fs::read_to_string(events).unwrap();
    assert_eq!(log.lines().count(), 301);
    assert!(log.starts_with("request_id,kind,class,k,crc_failed,escalated,decode_ok,wire_read,wire_written\n"));
}

#[test]
fn failure_curve_is_monotone_in_ber_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("fc.csv");
    let cfg = manifest_dir().join("configs/failure_curve.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(out_path).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    let log_rate = |size: &str, ber: &str| -> f64 {
        rows.iter().find(|r| r[1] == size && r[5] == ber).unwrap()[7].parse().unwrap()
    };
    let sizes = ["32", "64", "128", "256", "512", "1024", "2048"];
    let bers = ["1e-06", "1e-05", "0.0001", "0.001", "0.01"];
    for s in sizes {
        for w in bers.windows(2) {
            assert!(log_rate(s, w[0]) < log_rate(s, w[1]), "{s} {w:?}");
        }
    }
    for w in sizes.windows(2) {
        assert!(log_rate(w[1], "1e-05") < log_rate(w[0], "1e-05"), "{w:?}");
    }
}
