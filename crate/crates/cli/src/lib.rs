//! Command-line front end: argument parsing, configuration and report output.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nestball_core::report::create_file;
use nestball_core::{GridScheme, NormKind, ReportBundle, Suite};
use thiserror::Error;

use crate::commands::RunOutput;
use crate::config::{Command, Format, RunConfig, SEED_ENV};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TEST_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] nestball_core::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use nestball_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(E::Validation { .. } | E::Domain { .. } | E::Config(_)) => EXIT_USAGE,
            CliError::Core(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nestball",
    version,
    about = "Robust mean bounds by nested-ball Monte Carlo with sample reuse"
)]
pub struct Cli {
    /// TOML config file (or JSON config / report bundle).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Samples per level N.
    #[arg(long, short = 'n', global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// euclidean, sup or one.
    #[arg(long, global = true)]
    pub norm: Option<NormKind>,
    /// Largest radius r.
    #[arg(long, alias = "radius", global = true)]
    pub max_radius: Option<f64>,
    /// Number of grid radii m.
    #[arg(long, short = 'm', global = true)]
    pub levels: Option<usize>,
    /// Smallest grid radius.
    #[arg(long, global = true)]
    pub min_radius: Option<f64>,
    /// geometric-in-volume, linear-in-radius or explicit.
    #[arg(long, global = true)]
    pub scheme: Option<GridScheme>,
    /// Comma-separated radii for an explicit grid.
    #[arg(long, value_delimiter = ',', global = true)]
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Lower and upper bounds on E[Q] from a reuse sweep.
    Estimate {
        /// zero, odd-symmetric or quadratic-shift.
        #[arg(long)]
        problem: Option<String>,
        /// Also run the baseline that draws fresh samples at every level.
        #[arg(long)]
        naive: bool,
    },
    /// Exact law of the fresh-sample count and its tail bounds.
    Complexity,
    /// Run a verification suite; exits 0 iff it passes.
    Verify { suite: Option<Suite> },
    /// Empirical fresh-sample density over a dense chain.
    Density {
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        exact_bins: Option<usize>,
        #[arg(long)]
        envelope_bins: Option<usize>,
    },
    /// Re-run the configuration echoed in a JSON report bundle.
    Rerun { bundle: PathBuf },
}

impl Cli {
    /// The configuration set on the command line.
    pub fn flag_config(&self) -> RunConfig {
        let g = &self.geometry;
        let mut c = RunConfig {
            seed: self.seed,
            samples: self.samples,
            replications: self.replications,
            alpha: self.alpha,
            ..RunConfig::default()
        };
        c.problem.dim = g.dim;
        c.problem.norm = g.norm;
        c.problem.max_radius = g.max_radius;
        c.grid.min_radius = g.min_radius;
        c.grid.scheme = g.scheme;
        c.grid.radii = g.radii.clone();
        c.output.path = self.output.clone();
        c.output.format = self.format;
        let mut dense_levels = false;
        match &self.command {
            Cmd::Estimate { problem, naive } => {
                c.command = Some(Command::Estimate);
                c.problem.id = problem.clone();
                c.estimate.naive = naive.then_some(true);
            }
            Cmd::Complexity => c.command = Some(Command::Complexity),
            Cmd::Verify { suite } => {
                c.command = Some(Command::Verify);
                c.verify.suite = *suite;
                dense_levels = *suite == Some(Suite::DensityProfile);
            }
            Cmd::Density {
                kappa,
                a,
                exact_bins,
                envelope_bins,
            } => {
                c.command = Some(Command::Density);
                c.density.kappa = *kappa;
                c.density.a = *a;
                c.density.exact_bins = *exact_bins;
                c.density.envelope_bins = *envelope_bins;
                dense_levels = true;
            }
            Cmd::Rerun { .. } => {}
        }
        if dense_levels {
            c.density.levels = g.levels;
        } else {
            c.grid.levels = g.levels;
        }
        c
    }
}

/// File config (if any) with the command-line flags laid over it.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = match (&cli.command, &cli.config) {
        (Cmd::Rerun { bundle }, _) => {
            let text = std::fs::read_to_string(bundle).map_err(|e| CliError::Io {
                path: bundle.clone(),
                source: e,
            })?;
            let b = ReportBundle::from_json(&text)?;
            serde_json::from_value(b.config).map_err(|e| {
                CliError::Usage(format!("{}: bad config echo: {e}", bundle.display()))
            })?
        }
        (_, Some(path)) => RunConfig::from_file(path)?,
        (_, None) => RunConfig::default(),
    };
    let flags = cli.flag_config();
    if let (Some(file_cmd), Some(flag_cmd)) = (base.command, flags.command) {
        if file_cmd != flag_cmd {
            return Err(CliError::Usage(format!(
                "config file is for `{}` but the command is `{}`",
                file_cmd.as_str(),
                flag_cmd.as_str()
            )));
        }
    }
    let merged = base.overlay(flags);
    if merged.verify.suite.is_none() && matches!(cli.command, Cmd::Verify { .. }) {
        return Err(CliError::Usage(
            "verify needs a suite: reuse-uniformity, poisson-dominance, poisson-convergence, complexity-tails or density-profile".into(),
        ));
    }
    Ok(merged)
}

fn write_output(cfg: &RunConfig, out: &RunOutput) -> Result<(), CliError> {
    let format = cfg.output.format.unwrap_or(Format::Json);
    let body = match format {
        Format::Json => out.bundle.to_json()?.into_bytes(),
        Format::Csv => match &out.csv {
            Some(csv) => csv.clone(),
            None => {
                return Err(CliError::Usage(
                    "this command has no CSV table; use --format json".into(),
                ))
            }
        },
    };
    match &cfg.output.path {
        Some(path) => {
            let mut f = create_file(path)?;
            let io = |e| CliError::Io {
                path: path.clone(),
                source: e,
            };
            f.write_all(&body).map_err(io)?;
            if format == Format::Json {
                f.write_all(b"\n").map_err(io)?;
            }
            f.flush().map_err(io)?;
            let mut so = std::io::stdout().lock();
            let _ = write!(so, "{}", out.summary);
            let _ = writeln!(so, "wrote {}", path.display());
        }
        None if out.passed.is_some() => {
            // verify: the human report goes to stdout, JSON only on request
            let mut so = std::io::stdout().lock();
            let _ = write!(so, "{}", out.summary);
            if cfg.output.format.is_some() {
                let _ = so.write_all(&body);
                let _ = writeln!(so);
            }
        }
        None => {
            let _ = write!(std::io::stderr(), "{}", out.summary);
            let mut so = std::io::stdout().lock();
            let _ = so.write_all(&body);
            if format == Format::Json {
                let _ = writeln!(so);
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs, writes output and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
            e.print().ok();
            return code;
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let result = resolve_config(&cli).and_then(|cfg| {
        let out = commands::run(&cfg, env_seed.as_deref())?;
        write_output(&cfg, &out)?;
        Ok(out.passed)
    });
    match result {
        Ok(Some(false)) => EXIT_TEST_FAILED,
        Ok(_) => EXIT_PASS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
