use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nelson-lab"));
    c.env_remove("NELSON_LAB_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_run(dir: &Path, name: &str, extra: &[&str]) -> (Output, String) {
    let out = dir.join(name);
    let mut args = vec!["run", "oscillator-measured-at-0", "--n-traj", "400", "--dt", "0.01", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    let csv = std::fs::read_to_string(&out).unwrap_or_default();
    (o, csv)
}

#[test]
fn list_presets_names_all_five() {
    let o = run(&["list-presets"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in nelson_core::measurement::PRESET_NAMES {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn same_seed_gives_identical_csv_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, csv_a) = small_run(dir.path(), "a.csv", &["--seed", "4", "--threads", "1", "--no-timestamp"]);
    let (b, csv_b) = small_run(dir.path(), "b.csv", &["--seed", "4", "--threads", "3", "--no-timestamp"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(csv_a, csv_b);
    let (_, csv_c) = small_run(dir.path(), "c.csv", &["--seed", "5", "--no-timestamp"]);
    assert_ne!(csv_a, csv_c);
}

#[test]
fn csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (o, csv) = small_run(dir.path(), "x.csv", &["--lags", "0,pi,2pi"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config: preset=oscillator-measured-at-0 "));
    assert!(lines[1].starts_with("# config_hash: "));
    assert!(lines[2].starts_with("# generated_unix: "));
    assert_eq!(lines[3], nelson_lab::CSV_COLUMNS);
    assert_eq!(lines.len(), 7);
    assert!(lines[5].starts_with("3.14,"));
    for row in &lines[4..] {
        assert_eq!(row.split(',').count(), 9);
    }
}

#[test]
fn timestamp_is_the_only_varying_line() {
    let dir = tempfile::tempdir().unwrap();
    let (_, with) = small_run(dir.path(), "t.csv", &["--seed", "9"]);
    let (_, without) = small_run(dir.path(), "n.csv", &["--seed", "9", "--no-timestamp"]);
    let stripped: Vec<&str> = with.lines().filter(|l| !l.starts_with("# generated_unix:")).collect();
    assert_eq!(stripped, without.lines().collect::<Vec<_>>());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# small run\npreset = oscillator-unmeasured\nn_traj = 300\ndt = 0.01\nseed = 3\nlags = 0, 0.5\nno-timestamp = true\n").unwrap();
    let out = dir.path().join("o.csv");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--n-traj", "500", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.contains("n_traj=500 "), "{csv}");
    assert!(csv.contains("seed=3 "));
    assert!(!csv.contains("generated_unix"));

    std::fs::write(&cfg, "preset = oscillator-unmeasured\nbogus = 1\n").unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `bogus`"));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.csv");
    let o = bin()
        .env("NELSON_LAB_SEED", "42")
        .args(["run", "oscillator-unmeasured", "--n-traj", "200", "--dt", "0.01", "--lags", "0", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&out).unwrap().contains("seed=42 "));
}

#[test]
fn invalid_input_exits_with_2() {
    let o = run(&["run", "oscillator-unmeasured", "--dt", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--dt"));
    let o = run(&["run", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["run"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["run", "oscillator-unmeasured", "--out", "/nonexistent-dir/x.csv", "--n-traj", "10", "--dt", "0.1", "--lags", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/x.csv"));
}

#[test]
fn failing_verdict_exits_with_1() {
    // A pointer much wider than σ barely conditions the partner, so the
    // commuting-time value stays near the decayed one, far from −C12.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let o = run(&[
        "run", "entangled-pair-measured", "--collapse-width", "3", "--n-traj", "2000", "--dt", "0.01", "--lags", "pi",
        "--out", out.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(o.status.code(), Some(1), "{csv}");
    assert!(csv.trim_end().ends_with("FAIL"));
}

#[test]
fn pair_summary_reports_the_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&["run", "entangled-pair-unmeasured", "--n-traj", "2000", "--dt", "0.01", "--lags", "0,pi", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("|mc − C12 cos ωt|"), "{text}");
}
