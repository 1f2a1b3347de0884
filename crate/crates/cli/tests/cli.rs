use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nestball_core::report::{read_density_csv, read_levels_csv, read_pmf_csv};
use nestball_core::{DensityFlag, ReportBundle};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nestball(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestball"))
        .args(args)
        .env_remove("NESTBALL_SEED")
        .output()
        .expect("spawn nestball")
}

fn bundle(path: &Path) -> ReportBundle {
    ReportBundle::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn seed_flag_overrides_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e.json");
    let cfg = configs().join("estimate.toml");
    let o = nestball(&[
        "--config",
        path_str(&cfg),
        "--seed",
        "7",
        "-n",
        "50",
        "-m",
        "5",
        "-o",
        path_str(&out),
        "estimate",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = bundle(&out);
    assert_eq!(b.provenance.seed, 7);
    assert_eq!(b.config["seed"], 7);
    assert_eq!(b.config["samples"], 50);
    assert_eq!(b.config["problem"]["id"], "quadratic-shift");
}

#[test]
fn env_seed_used_when_no_seed_given() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e.json");
    let o = Command::new(env!("CARGO_BIN_EXE_nestball"))
        .args([
            "estimate",
            "--problem",
            "zero",
            "-n",
            "10",
            "-m",
            "3",
            "--min-radius",
            "0.5",
        ])
        .args(["-o", path_str(&out)])
        .env("NESTBALL_SEED", "123")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(bundle(&out).provenance.seed, 123);
}

#[test]
fn zero_levels_is_a_usage_error_naming_the_field() {
    let o = nestball(&["estimate", "--problem", "zero", "-n", "10", "-m", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("grid.levels"), "{err}");
    assert!(err.contains("at least 1"), "{err}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "command = \"complexity\"\nsamples = 10\nsampels = 3\n",
    )
    .unwrap();
    let o = nestball(&["--config", path_str(&cfg), "complexity"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampels"));
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    let o = nestball(&["complexity", "--norm", "taxicab"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_upper_bound_near_one_third() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("levels.csv");
    let cfg = configs().join("estimate.toml");
    let o = nestball(&[
        "--config",
        path_str(&cfg),
        "--format",
        "csv",
        "-o",
        path_str(&out),
        "estimate",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let levels = read_levels_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(levels.len(), 100);
    let top = levels
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .unwrap();
    assert!((top.mean - 1.0 / 3.0).abs() <= 4.0 * top.stderr, "{top:?}");
    for l in &levels {
        assert_eq!(l.reused + l.fresh_count, 10_000);
    }
}

#[test]
fn complexity_pmf_sums_to_one_with_mean_below_lambda() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pmf.csv");
    let cfg = configs().join("complexity.toml");
    let o = nestball(&[
        "--config",
        path_str(&cfg),
        "--format",
        "csv",
        "-o",
        path_str(&out),
        "complexity",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_pmf_csv(std::fs::File::open(&out).unwrap()).unwrap();
    let total: f64 = rows.iter().map(|r| r.prob).sum();
    let mean: f64 = rows.iter().map(|r| r.k as f64 * r.prob).sum();
    assert!((total - 1.0).abs() <= 1e-12, "{total}");
    assert!(mean < 10.0, "{mean}");
    assert!((rows[0].prob - (-10.0f64).exp()).abs() < 1e-15);
}

#[test]
fn verify_reuse_uniformity_passes_with_shipped_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let cfg = configs().join("verify-reuse-uniformity.toml");
    let o = nestball(&["--config", path_str(&cfg), "-o", path_str(&out), "verify"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let report = bundle(&out).report.unwrap();
    assert!(report.passed);
    assert!(report.checks.iter().any(|c| c.name == "radial-ks"));
}

#[test]
fn verify_failure_exits_one() {
    // a TV threshold no finite grid meets
    let o = nestball(&["verify", "poisson-convergence", "-n", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("strict.toml");
    std::fs::write(
        &cfg,
        "command = \"verify\"\n[verify]\nsuite = \"poisson-convergence\"\ntv_threshold = 1e-9\n",
    )
    .unwrap();
    let o = nestball(&["--config", path_str(&cfg), "verify"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_and_rerun_reproduces() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    let args = |p: &Path| {
        vec![
            "estimate".to_string(),
            "--problem".into(),
            "odd-symmetric".into(),
            "--dim".into(),
            "3".into(),
            "--norm".into(),
            "sup".into(),
            "-n".into(),
            "300".into(),
            "-m".into(),
            "8".into(),
            "--min-radius".into(),
            "0.3".into(),
            "--naive".into(),
            "--seed".into(),
            "11".into(),
            "-o".into(),
            p.to_str().unwrap().to_string(),
        ]
    };
    for p in [&a, &b] {
        let argv = args(p);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert!(nestball(&argv).status.success());
    }
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());

    let o = nestball(&["rerun", path_str(&a), "-o", path_str(&c)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(bytes_a, std::fs::read(&c).unwrap());

    let d = dir.path().join("d.json");
    let o = nestball(&["--config", path_str(&a), "-o", path_str(&d), "estimate"]);
    assert!(o.status.success());
    assert_eq!(bytes_a, std::fs::read(&d).unwrap());
    assert!(bundle(&a).naive_levels.is_some());
}

#[test]
fn csv_outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = nestball(&[
            "density",
            "-n",
            "20",
            "--replications",
            "50",
            "-m",
            "60",
            "--exact-bins",
            "6",
            "--envelope-bins",
            "2",
            "--format",
            "csv",
            "-o",
            path_str(&p),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&p).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    let rows = read_density_csv(first.as_slice()).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(
        rows.iter().filter(|r| r.flag == DensityFlag::Exact).count(),
        6
    );
    assert_eq!(
        rows.iter()
            .filter(|r| r.flag == DensityFlag::UpperBound)
            .count(),
        2
    );
}

#[test]
fn verify_has_no_csv_table() {
    let o = nestball(&["verify", "complexity-tails", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_config_command_is_rejected() {
    let cfg = configs().join("complexity.toml");
    let o = nestball(&["--config", path_str(&cfg), "estimate"]);
    assert_eq!(o.status.code(), Some(2));
}
