//! CSV and JSON output.
//!
//! CSV floats are written with 17 significant digits (`{:.16e}`), which is
//! enough for every `f64` to parse back to the same bits. JSON uses
//! serde_json's shortest round-trip representation, which has the same
//! property.
//!
//! | table   | columns                                   |
//! |---------|-------------------------------------------|
//! | levels  | `rho,mean,stderr,reused,fresh`            |
//! | pmf     | `k,prob,poisson_prob`                     |
//! | density | `rho_center,empirical,theoretical,flag`   |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complexity::{poisson_pmf, DensityFlag, DensityProfile, FreshCountDist};
use crate::error::{Error, Result};
use crate::estimator::{BoundsReport, LevelEstimate};
use crate::verify::TestReport;

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

pub const LEVELS_HEADER: [&str; 5] = ["rho", "mean", "stderr", "reused", "fresh"];
pub const PMF_HEADER: [&str; 3] = ["k", "prob", "poisson_prob"];
pub const DENSITY_HEADER: [&str; 4] = ["rho_center", "empirical", "theoretical", "flag"];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfRow {
    pub k: usize,
    pub prob: f64,
    pub poisson_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub rho_center: f64,
    pub empirical: f64,
    pub theoretical: f64,
    pub flag: DensityFlag,
}

#[derive(Debug, Deserialize)]
struct LevelRow {
    rho: f64,
    mean: f64,
    stderr: f64,
    reused: usize,
    fresh: usize,
}

pub fn pmf_rows(dist: &FreshCountDist, lambda: f64) -> Vec<PmfRow> {
    dist.pmf
        .iter()
        .enumerate()
        .map(|(k, &prob)| PmfRow {
            k,
            prob,
            poisson_prob: poisson_pmf(k, lambda),
        })
        .collect()
}

pub fn density_rows(profile: &DensityProfile) -> Vec<DensityRow> {
    profile
        .bins
        .iter()
        .map(|b| DensityRow {
            rho_center: b.center,
            empirical: b.empirical,
            theoretical: b.theoretical,
            flag: b.flag,
        })
        .collect()
}

pub fn write_levels_csv<W: Write>(out: W, levels: &[LevelEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEVELS_HEADER)?;
    for l in levels {
        w.write_record([
            fmt_f64(l.radius),
            fmt_f64(l.mean),
            fmt_f64(l.stderr),
            l.reused.to_string(),
            l.fresh_count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_levels_csv<R: Read>(input: R) -> Result<Vec<LevelEstimate>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &LEVELS_HEADER)?;
    r.deserialize::<LevelRow>()
        .map(|row| {
            let row = row?;
            Ok(LevelEstimate {
                radius: row.rho,
                mean: row.mean,
                stderr: row.stderr,
                reused: row.reused,
                fresh_count: row.fresh,
            })
        })
        .collect()
}

pub fn write_pmf_csv<W: Write>(out: W, rows: &[PmfRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PMF_HEADER)?;
    for r in rows {
        w.write_record([r.k.to_string(), fmt_f64(r.prob), fmt_f64(r.poisson_prob)])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_pmf_csv<R: Read>(input: R) -> Result<Vec<PmfRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &PMF_HEADER)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_density_csv<W: Write>(out: W, rows: &[DensityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DENSITY_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.rho_center),
            fmt_f64(r.empirical),
            fmt_f64(r.theoretical),
            r.flag.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_density_csv<R: Read>(input: R) -> Result<Vec<DensityRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &DENSITY_HEADER)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got = r.headers()?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::invalid(
            "csv header",
            format!(
                "expected `{}`, got `{}`",
                want.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

/// Opens `path` for writing, creating parent directories.
pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(seed: u64) -> Provenance {
        Provenance {
            tool: "nestball".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySummary {
    /// `lambda = N ln(V_max / V_min)`.
    pub lambda: f64,
    /// Exact `E[sum_{l>=2} n_l]`, when the law was computed.
    pub exact_mean: Option<f64>,
    /// Observed `sum_{l>=2} n_l` of a chain run.
    pub fresh_after_first: Option<usize>,
    /// Observed `q` evaluations of a chain run.
    pub q_evaluations: Option<u64>,
    /// Evaluations the per-level fresh baseline would use.
    pub naive_evaluations: Option<u64>,
    pub tails: Vec<TailRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub k: usize,
    /// Exact `Pr{sum n_l >= k}`.
    pub exact: f64,
    pub chernoff: f64,
}

/// Everything one CLI invocation produced, plus the configuration that
/// reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<LevelEstimate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_levels: Option<Vec<LevelEstimate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexitySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<PmfRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<DensityRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<TestReport>,
}

impl ReportBundle {
    pub fn new(seed: u64, config: serde_json::Value) -> ReportBundle {
        ReportBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            provenance: Provenance::new(seed),
            config,
            levels: None,
            naive_levels: None,
            bounds: None,
            complexity: None,
            pmf: None,
            density: None,
            report: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ReportBundle> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::exact_fresh_dist_equal;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        for x in [0.1, 1.0 / 3.0, 1e-300, f64::MAX, -2.5e-7, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn levels_round_trip() {
        let levels = vec![
            LevelEstimate {
                radius: 1.0,
                mean: 1.0 / 3.0,
                stderr: 0.01,
                reused: 0,
                fresh_count: 10,
            },
            LevelEstimate {
                radius: 0.7,
                mean: -2e-9,
                stderr: 0.0,
                reused: 6,
                fresh_count: 4,
            },
        ];
        let mut buf = Vec::new();
        write_levels_csv(&mut buf, &levels).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rho,mean,stderr,reused,fresh\n"));
        assert_eq!(read_levels_csv(buf.as_slice()).unwrap(), levels);
    }

    #[test]
    fn pmf_round_trip_and_header_check() {
        let d = exact_fresh_dist_equal(3, &[0.5]).unwrap();
        let rows = pmf_rows(&d, 1.5);
        let mut buf = Vec::new();
        write_pmf_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_pmf_csv(buf.as_slice()).unwrap(), rows);
        assert!(read_pmf_csv("k,p,q\n0,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn density_flags() {
        let rows = vec![
            DensityRow {
                rho_center: 1.0,
                empirical: 2.0,
                theoretical: 2.5,
                flag: DensityFlag::Exact,
            },
            DensityRow {
                rho_center: 3.0,
                empirical: 1.0,
                theoretical: 1.5,
                flag: DensityFlag::UpperBound,
            },
        ];
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(",exact\n") && text.contains(",upper-bound\n"));
        assert_eq!(read_density_csv(buf.as_slice()).unwrap(), rows);
        assert!(read_density_csv(
            "rho_center,empirical,theoretical,flag\n1,1,1,maybe\n".as_bytes()
        )
        .is_err());
    }

    #[test]
    fn bundle_json_round_trip() {
        let mut b = ReportBundle::new(7, serde_json::json!({"seed": 7}));
        b.pmf = Some(pmf_rows(
            &exact_fresh_dist_equal(4, &[0.3, 0.9]).unwrap(),
            1.2,
        ));
        let back = ReportBundle::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
        assert!(!b.to_json().unwrap().contains("\"levels\""));
    }

    #[test]
    fn create_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = create_file(&blocker.join("out.csv")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
        assert!(create_file(&dir.path().join("a/b/out.csv")).is_ok());
    }
}
