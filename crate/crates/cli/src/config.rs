//! Run configuration: TOML (or JSON) file, then command-line flags.
//!
//! Precedence for every key is flag, then file, then built-in default. The
//! seed additionally falls back to `NESTBALL_SEED` before the built-in
//! default. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nestball_core::verify::DEFAULT_SEED;
use nestball_core::{GridScheme, NormKind, Suite};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "NESTBALL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Estimate,
    Complexity,
    Verify,
    Density,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Complexity => "complexity",
            Command::Verify => "verify",
            Command::Density => "density",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<GridScheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_radius: Option<f64>,
    /// Only with `scheme = "explicit"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naive: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_bins: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_sweep: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_expected_count: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// Every setting of a run. All keys are optional in files; [`RunConfig::resolve`]
/// fills defaults and checks what the chosen command needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub estimate: EstimateSection,
    pub density: DensitySection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

impl RunConfig {
    /// Reads a TOML file, or a JSON file when the extension is `.json`. A
    /// JSON report bundle is accepted too; its `config` echo is used.
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let value = match value.get("config") {
                Some(echo) if value.get("schema_version").is_some() => echo.clone(),
                _ => value,
            };
            serde_json::from_value(value)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message().trim())))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(e.message().trim().to_string()))
    }

    /// Values set in `over` win.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            command: pick(over.command, self.command),
            seed: pick(over.seed, self.seed),
            samples: pick(over.samples, self.samples),
            replications: pick(over.replications, self.replications),
            alpha: pick(over.alpha, self.alpha),
            problem: ProblemSection {
                id: pick(over.problem.id, self.problem.id),
                dim: pick(over.problem.dim, self.problem.dim),
                norm: pick(over.problem.norm, self.problem.norm),
                max_radius: pick(over.problem.max_radius, self.problem.max_radius),
            },
            grid: GridSection {
                scheme: pick(over.grid.scheme, self.grid.scheme),
                levels: pick(over.grid.levels, self.grid.levels),
                min_radius: pick(over.grid.min_radius, self.grid.min_radius),
                radii: pick(over.grid.radii, self.grid.radii),
            },
            estimate: EstimateSection {
                naive: pick(over.estimate.naive, self.estimate.naive),
            },
            density: DensitySection {
                kappa: pick(over.density.kappa, self.density.kappa),
                a: pick(over.density.a, self.density.a),
                levels: pick(over.density.levels, self.density.levels),
                exact_bins: pick(over.density.exact_bins, self.density.exact_bins),
                envelope_bins: pick(over.density.envelope_bins, self.density.envelope_bins),
            },
            verify: VerifySection {
                suite: pick(over.verify.suite, self.verify.suite),
                m_sweep: pick(over.verify.m_sweep, self.verify.m_sweep),
                tv_threshold: pick(over.verify.tv_threshold, self.verify.tv_threshold),
                rel_tol: pick(over.verify.rel_tol, self.verify.rel_tol),
                min_expected_count: pick(
                    over.verify.min_expected_count,
                    self.verify.min_expected_count,
                ),
            },
            output: OutputSection {
                path: pick(over.output.path, self.output.path),
                format: pick(over.output.format, self.output.format),
            },
        }
    }

    /// Seed from the config, else from `env_seed`, else the built-in default.
    pub fn effective_seed(&self, env_seed: Option<&str>) -> Result<u64, CliError> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match env_seed {
            Some(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!(
                    "{SEED_ENV}=`{v}` is not an unsigned 64-bit integer"
                ))
            }),
            None => Ok(DEFAULT_SEED),
        }
    }
}

pub(crate) fn require<T>(value: Option<T>, key: &str, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required key `{key}` ({what})")))
}

pub(crate) fn positive(value: usize, key: &str) -> Result<usize, CliError> {
    if value == 0 {
        return Err(CliError::Usage(format!(
            "`{key}` must be at least 1, got 0"
        )));
    }
    Ok(value)
}
