use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fiberlink_core::noise::{gen_power_law, NoiseSpec};
use fiberlink_core::FreqSeries;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fiberlink"));
    c.env("FIBERLINK_NO_COLOR", "1");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a tab-separated output file.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

fn assert_header(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap_or_default();
    assert!(first.starts_with('#'), "{} has no header", path.display());
    assert!(text.contains("config_hash"), "{} has no config hash", path.display());
}

#[test]
fn empty_noise_simulation_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--config", s(&scenario("empty-noise.toml")), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["remote.tsv", "end_to_end.tsv"] {
        let path = dir.path().join(name);
        assert_header(&path);
        let r = rows(&path);
        assert_eq!(r.len(), 3600);
        assert!(r.iter().all(|row| row[1].parse::<f64>().unwrap() == 0.0 && row[2] == "1"));
    }
    assert_header(&dir.path().join("manifest.tsv"));
}

#[test]
fn plan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = run(&["plan", "--config", s(&scenario("plan-60mhz.toml")), "--out", s(dir.path())]);
    assert_eq!(bad.status.code(), Some(2));
    assert_header(&dir.path().join("plan.txt"));
    let ok = run(&["plan", "--config", s(&scenario("plan-ok.toml")), "--out", s(dir.path())]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
}

#[test]
fn budget_total_is_rounded_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["budget", s(&scenario("budget.tsv")), "--out", s(dir.path())]);
    assert!(out.status.success());
    let path = dir.path().join("budget.tsv");
    assert_header(&path);
    let r = rows(&path);
    let total = r.iter().find(|row| row[0] == "total").unwrap();
    assert_eq!(total[2].parse::<f64>().unwrap(), 2e-19);
    let quad = r.iter().find(|row| row[0] == "quadrature").unwrap();
    let q = quad[2].parse::<f64>().unwrap();
    let want = (9e-20f64.powi(2) + 8e-22f64.powi(2) + 1e-19f64.powi(2)).sqrt();
    assert!((q / want - 1.0).abs() < 1e-5);

    let out = run(&["budget", s(&scenario("budget.tsv")), "--policy", "quadrature", "--out", s(dir.path())]);
    assert!(out.status.success());
    let r = rows(&path);
    let total = r.iter().find(|row| row[0] == "total").unwrap();
    assert!((total[2].parse::<f64>().unwrap() / want - 1.0).abs() < 1e-5);
}

#[test]
fn uptime_fixture_reports_combined_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["uptime", "--config", s(&scenario("uptime-two-branch.toml")), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("uptime.tsv");
    assert_header(&path);
    let r = rows(&path);
    let combined: f64 = r.iter().find(|row| row[0] == "combined").unwrap()[1].parse().unwrap();
    let product = 0.985 * 0.95 * 0.963;
    assert!((combined - product).abs() < 0.01, "{combined}");
    for row in &r {
        assert!(row[1].parse::<f64>().unwrap() >= combined);
    }
}

fn write_series(dir: &Path, name: &str, s: &FreqSeries) -> PathBuf {
    let p = dir.join(name);
    fiberlink_core::io::write_series(&p, s, "test", "y").unwrap();
    p
}

#[test]
fn analyze_zero_series() {
    let dir = tempfile::tempdir().unwrap();
    let zero = FreqSeries::zeros(58000.0, 1.0, 194.4e12, 512).unwrap();
    let input = write_series(dir.path(), "zero.tsv", &zero);
    let out = run(&["analyze", s(&input), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stab = dir.path().join("zero.stability.tsv");
    assert_header(&stab);
    assert_header(&dir.path().join("zero.histogram.tsv"));
    let r = rows(&stab);
    assert!(!r.is_empty());
    for row in r {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn analyze_white_fm_slope() {
    let dir = tempfile::tempdir().unwrap();
    let wfm = gen_power_law(&NoiseSpec::white_fm(1e-15, 1.0, 99), 1 << 15, 1.0)
        .unwrap()
        .with_t0(58000.0);
    let input = write_series(dir.path(), "wfm.tsv", &wfm);
    let out = run(&["analyze", s(&input), "--taus", "1,1000", "--out", s(dir.path())]);
    assert!(out.status.success());
    let r = rows(&dir.path().join("wfm.stability.tsv"));
    let a1: f64 = r[0][1].parse().unwrap();
    let a1000: f64 = r[1][1].parse().unwrap();
    let slope = (a1000 / a1).log10() / 3.0;
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
}

#[test]
fn analyze_counter_export() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("MJD ch1_Hz ch2_Hz\n");
    for i in 0..64 {
        let mjd = 58000.0 + i as f64 / 86400.0;
        let f = 1e6 + if i % 2 == 0 { 0.5 } else { -0.5 };
        text.push_str(&format!("{mjd:.12} {f} 55000000.0\n"));
    }
    let input = dir.path().join("counter.txt");
    fs::write(&input, text).unwrap();
    let out = run(&[
        "analyze",
        s(&input),
        "--channel",
        "ch1_Hz=1e6",
        "--nu0",
        "2e14",
        "--taus",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("counter.stability.tsv"));
    let a: f64 = r[0][1].parse().unwrap();
    // alternating +-0.5 Hz: successive differences of 1 Hz
    let want = (0.5f64).sqrt() * 1.0 / 2e14;
    assert!((a / want - 1.0).abs() < 1e-6, "{a:e} vs {want:e}");
}

#[test]
fn select_writes_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let wpm = gen_power_law(&NoiseSpec::white_pm(1e-16, 1.0, 5), 20000, 1.0)
        .unwrap()
        .with_t0(58000.0)
        .with_nu0(194.4e12)
        .unwrap();
    let input = write_series(dir.path(), "clean.tsv", &wpm);
    let out = run(&["select", s(&input), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for suffix in ["mask", "observables", "selected"] {
        let p = dir.path().join(format!("clean.{suffix}.tsv"));
        assert_header(&p);
        assert_eq!(rows(&p).len(), 20000);
    }
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.tsv");
    fs::write(&garbage, "not a number\tat all\n").unwrap();
    let out = run(&["analyze", s(&garbage), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = run(&["budget", s(&dir.path().join("missing.tsv")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));

    let bad_cfg = dir.path().join("bad.toml");
    fs::write(&bad_cfg, "[run]\nsamples = 10\nunknown_key = 1\n").unwrap();
    let out = run(&["simulate", "--config", s(&bad_cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(&["simulate", "--config", s(&scenario("hybrid-43km.toml")), "--seed", "5", "--out", s(d.path())]);
        assert!(out.status.success());
    }
    for name in ["remote.tsv", "end_to_end.tsv", "manifest.tsv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}
