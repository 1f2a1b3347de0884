//! Resolution of a [`RunConfig`] into a concrete run, and the runs themselves.

use nestball_core::complexity::{expected_fresh_upper, DensityConfig, DensityParams, PoissonRef};
use nestball_core::report::{
    density_rows, pmf_rows, write_density_csv, write_levels_csv, write_pmf_csv, ComplexitySummary,
    ReportBundle, TailRow,
};
use nestball_core::rng::{LANE_CHAIN, LANE_NAIVE};
use nestball_core::verify::TestConfig;
use nestball_core::{
    bounds, build_grid, chernoff_tail, density_empirical, estimate_levels, estimate_naive,
    exact_fresh_dist_equal, run_suite, substream, BuiltinProblem, GridScheme, GridSpec, NormKind,
    ProblemDef, Suite,
};

use crate::config::{
    positive, require, Command, DensitySection, EstimateSection, GridSection, ProblemSection,
    RunConfig, VerifySection,
};
use crate::CliError;

pub const DEFAULT_DENSITY_SAMPLES: usize = 100;
pub const DEFAULT_DENSITY_DIM: usize = 2;
pub const DEFAULT_DENSITY_A: f64 = 100.0;
pub const DEFAULT_DENSITY_LEVELS: usize = 400;
pub const DEFAULT_DENSITY_EXACT_BINS: usize = 40;
pub const DEFAULT_DENSITY_ENVELOPE_BINS: usize = 4;
pub const DEFAULT_DENSITY_REPLICATIONS: usize = 2000;

/// `kappa` with `d ln kappa = 0.1` at the default `d = 2`.
pub fn default_kappa() -> f64 {
    0.05f64.exp()
}

/// Result of one command before it is written anywhere.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bundle: ReportBundle,
    /// The command's main table as CSV, if it has one.
    pub csv: Option<Vec<u8>>,
    /// Human-readable summary.
    pub summary: String,
    /// `Some(verdict)` for `verify`.
    pub passed: Option<bool>,
}

struct Geometry {
    dim: usize,
    norm: NormKind,
    max_radius: f64,
    grid: GridSpec,
    echo_problem: ProblemSection,
    echo_grid: GridSection,
}

fn geometry(cfg: &RunConfig) -> Result<Geometry, CliError> {
    let dim = positive(cfg.problem.dim.unwrap_or(1), "problem.dim")?;
    let norm = cfg.problem.norm.unwrap_or(NormKind::Euclidean);
    let max_radius = cfg.problem.max_radius.unwrap_or(1.0);
    let scheme = cfg.grid.scheme.unwrap_or_default();
    let (grid, echo_grid) = if scheme == GridScheme::Explicit {
        let radii = require(
            cfg.grid.radii.clone(),
            "grid.radii",
            "an explicit grid lists its radii",
        )?;
        let grid = GridSpec::explicit(radii.clone())?;
        let echo = GridSection {
            scheme: Some(scheme),
            radii: Some(radii),
            ..GridSection::default()
        };
        (grid, echo)
    } else {
        if cfg.grid.radii.is_some() {
            return Err(CliError::Usage(
                "`grid.radii` is only allowed with grid.scheme = \"explicit\"".into(),
            ));
        }
        let levels = positive(
            require(cfg.grid.levels, "grid.levels", "number of grid radii m")?,
            "grid.levels",
        )?;
        let min = if levels > 1 {
            Some(require(
                cfg.grid.min_radius,
                "grid.min_radius",
                "smallest radius rho_m",
            )?)
        } else {
            None
        };
        let grid = build_grid(max_radius, levels, scheme, min)?;
        let echo = GridSection {
            scheme: Some(scheme),
            levels: Some(levels),
            min_radius: min,
            radii: None,
        };
        (grid, echo)
    };
    Ok(Geometry {
        dim,
        norm,
        max_radius,
        grid,
        echo_problem: ProblemSection {
            id: None,
            dim: Some(dim),
            norm: Some(norm),
            max_radius: Some(max_radius),
        },
        echo_grid,
    })
}

fn to_json_value(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Core(e.into()))
}

/// Runs `cfg`. `env_seed` is the value of the seed environment variable.
pub fn run(cfg: &RunConfig, env_seed: Option<&str>) -> Result<RunOutput, CliError> {
    let command = require(
        cfg.command,
        "command",
        "estimate, complexity, verify or density",
    )?;
    let seed = cfg.effective_seed(env_seed)?;
    match command {
        Command::Estimate => run_estimate(cfg, seed),
        Command::Complexity => run_complexity(cfg),
        Command::Verify => run_verify(cfg, seed),
        Command::Density => run_density(cfg, seed),
    }
}

fn run_estimate(cfg: &RunConfig, seed: u64) -> Result<RunOutput, CliError> {
    let id = require(
        cfg.problem.id.clone(),
        "problem.id",
        "zero, odd-symmetric or quadratic-shift",
    )?;
    let quantity: BuiltinProblem = id.parse()?;
    let geo = geometry(cfg)?;
    let n = require(cfg.samples, "samples", "samples per level N")?;
    if n < 2 {
        return Err(CliError::Usage(format!(
            "`samples` must be at least 2, got {n}"
        )));
    }
    let naive = cfg.estimate.naive.unwrap_or(false);
    let problem = ProblemDef::new(geo.dim, geo.norm, geo.max_radius, quantity)?;

    let sweep = estimate_levels(&problem, &geo.grid, n, &mut substream(seed, LANE_CHAIN, 0))?;
    let naive_sweep = if naive {
        Some(estimate_naive(
            &problem,
            &geo.grid,
            n,
            &mut substream(seed, LANE_NAIVE, 0),
        )?)
    } else {
        None
    };
    let report = bounds(&sweep.levels)?;
    let ratios = geo.grid.volume_ratios(geo.dim);
    let lambda = n as f64 * geo.grid.log_volume_span(geo.dim);
    let complexity = ComplexitySummary {
        lambda,
        exact_mean: Some(ratios.iter().map(|p| n as f64 * (1.0 - p)).sum()),
        fresh_after_first: Some(sweep.levels.iter().skip(1).map(|l| l.fresh_count).sum()),
        q_evaluations: Some(sweep.q_evaluations),
        naive_evaluations: Some((n * geo.grid.len()) as u64),
        tails: Vec::new(),
    };

    let echo = RunConfig {
        command: Some(Command::Estimate),
        seed: Some(seed),
        samples: Some(n),
        problem: ProblemSection {
            id: Some(quantity.id().to_string()),
            ..geo.echo_problem
        },
        grid: geo.echo_grid,
        estimate: EstimateSection { naive: Some(naive) },
        ..RunConfig::default()
    };
    let mut bundle = ReportBundle::new(seed, to_json_value(&echo)?);
    let mut csv = Vec::new();
    write_levels_csv(&mut csv, &sweep.levels)?;

    let mut summary = format!(
        "problem {} d={} norm={} r={}  m={} N={}\n",
        quantity,
        geo.dim,
        geo.norm,
        geo.max_radius,
        geo.grid.len(),
        n
    );
    summary += &format!(
        "lower {:.10} (rho {:.6})\nupper {:.10} (rho {:.6})\n",
        report.lower, report.argmin_radius, report.upper, report.argmax_radius
    );
    summary += &format!(
        "q evaluations {} (naive {}), lambda {:.6}\n",
        sweep.q_evaluations,
        n * geo.grid.len(),
        lambda
    );
    summary += &format!("note: {}\n", report.note);

    bundle.levels = Some(sweep.levels);
    bundle.naive_levels = naive_sweep.map(|s| s.levels);
    bundle.bounds = Some(report);
    bundle.complexity = Some(complexity);
    Ok(RunOutput {
        bundle,
        csv: Some(csv),
        summary,
        passed: None,
    })
}

fn run_complexity(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let geo = geometry(cfg)?;
    let n = positive(
        require(cfg.samples, "samples", "samples per level N")?,
        "samples",
    )?;
    let ratios = geo.grid.volume_ratios(geo.dim);
    let dist = exact_fresh_dist_equal(n, &ratios)?;
    let lambda = n as f64 * geo.grid.log_volume_span(geo.dim);

    let mut tails = Vec::new();
    if lambda > 0.0 {
        for k in (lambda.floor() as usize + 1)..=((3.0 * lambda).floor() as usize) {
            tails.push(TailRow {
                k,
                exact: dist.tail_at_least(k),
                chernoff: chernoff_tail(lambda, k as f64)?,
            });
        }
    }
    let rows = pmf_rows(&dist, lambda);
    let echo = RunConfig {
        command: Some(Command::Complexity),
        samples: Some(n),
        problem: ProblemSection {
            norm: None,
            ..geo.echo_problem
        },
        grid: geo.echo_grid,
        ..RunConfig::default()
    };
    let mut bundle = ReportBundle::new(0, to_json_value(&echo)?);
    let mut csv = Vec::new();
    write_pmf_csv(&mut csv, &rows)?;

    let mean = dist.mean();
    let upper = expected_fresh_upper(&PoissonRef { lambda });
    let mut summary = format!(
        "N={} m={} d={}  lambda = {:.10}\nexact mean {:.10} (< lambda: {})\n",
        n,
        geo.grid.len(),
        geo.dim,
        lambda,
        mean,
        mean < upper
    );
    summary += &format!(
        "Pr{{sum = 0}} = {:.6e}, exp(-lambda) = {:.6e}, total mass {:.15}\n",
        dist.prob(0),
        (-lambda).exp(),
        dist.total_mass()
    );
    if lambda > 0.0 {
        let k = (std::f64::consts::E * lambda).ceil() as usize;
        summary += &format!(
            "Pr{{sum >= e lambda}} = {:.6e} <= {:.6e}\n",
            dist.tail_at_least(k),
            (-lambda).exp()
        );
    }

    bundle.complexity = Some(ComplexitySummary {
        lambda,
        exact_mean: Some(mean),
        fresh_after_first: None,
        q_evaluations: None,
        naive_evaluations: None,
        tails,
    });
    bundle.pmf = Some(rows);
    Ok(RunOutput {
        bundle,
        csv: Some(csv),
        summary,
        passed: None,
    })
}

fn run_density(cfg: &RunConfig, seed: u64) -> Result<RunOutput, CliError> {
    let n = positive(cfg.samples.unwrap_or(DEFAULT_DENSITY_SAMPLES), "samples")?;
    let dim = positive(
        cfg.problem.dim.unwrap_or(DEFAULT_DENSITY_DIM),
        "problem.dim",
    )?;
    let norm = cfg.problem.norm.unwrap_or(NormKind::Euclidean);
    let d = &cfg.density;
    let density = DensitySection {
        kappa: Some(d.kappa.unwrap_or_else(default_kappa)),
        a: Some(d.a.unwrap_or(DEFAULT_DENSITY_A)),
        levels: Some(d.levels.unwrap_or(DEFAULT_DENSITY_LEVELS)),
        exact_bins: Some(d.exact_bins.unwrap_or(DEFAULT_DENSITY_EXACT_BINS)),
        envelope_bins: Some(d.envelope_bins.unwrap_or(DEFAULT_DENSITY_ENVELOPE_BINS)),
    };
    let replications = positive(
        cfg.replications.unwrap_or(DEFAULT_DENSITY_REPLICATIONS),
        "replications",
    )?;
    let dcfg = DensityConfig {
        params: DensityParams {
            n,
            dim,
            kappa: density.kappa.unwrap_or_default(),
            a: density.a.unwrap_or_default(),
        },
        norm,
        levels: density.levels.unwrap_or_default(),
        exact_bins: density.exact_bins.unwrap_or_default(),
        envelope_bins: density.envelope_bins.unwrap_or_default(),
        replications,
        seed,
    };
    let profile = density_empirical(&dcfg)?;
    let rows = density_rows(&profile);

    let echo = RunConfig {
        command: Some(Command::Density),
        seed: Some(seed),
        samples: Some(n),
        replications: Some(replications),
        problem: ProblemSection {
            dim: Some(dim),
            norm: Some(norm),
            ..ProblemSection::default()
        },
        density,
        ..RunConfig::default()
    };
    let mut bundle = ReportBundle::new(seed, to_json_value(&echo)?);
    let mut csv = Vec::new();
    write_density_csv(&mut csv, &rows)?;
    let peak = &profile.bins[profile.peak_index()];
    let summary = format!(
        "N={} d={} kappa={} a={}  lambda = N d ln kappa = {:.6}\n\
         peak bin center {:.6} (a/kappa = {:.6})\n\
         mean fresh samples {:.6} (bound N(1 + d ln kappa) = {:.6})\n",
        n,
        dim,
        dcfg.params.kappa,
        dcfg.params.a,
        dcfg.params.lambda(),
        peak.center,
        dcfg.params.peak_radius(),
        profile.mean_total_fresh,
        n as f64 * (1.0 + dim as f64 * dcfg.params.kappa.ln())
    );
    bundle.complexity = Some(ComplexitySummary {
        lambda: dcfg.params.lambda(),
        exact_mean: None,
        fresh_after_first: None,
        q_evaluations: None,
        naive_evaluations: None,
        tails: Vec::new(),
    });
    bundle.density = Some(rows);
    Ok(RunOutput {
        bundle,
        csv: Some(csv),
        summary,
        passed: None,
    })
}

/// The suite configuration: shipped defaults with every key the user set
/// laid over them.
pub fn test_config(cfg: &RunConfig, seed: u64) -> Result<TestConfig, CliError> {
    let suite = require(cfg.verify.suite, "verify.suite", "which suite to run")?;
    let mut t = TestConfig::default_for(suite);
    t.seed = seed;
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    let setf = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut t.dim, cfg.problem.dim);
    if let Some(n) = cfg.problem.norm {
        t.norm = n;
    }
    setf(&mut t.max_radius, cfg.problem.max_radius);
    setf(&mut t.min_radius, cfg.grid.min_radius);
    if suite == Suite::DensityProfile {
        set(&mut t.levels, cfg.density.levels);
    } else {
        set(&mut t.levels, cfg.grid.levels);
    }
    set(&mut t.samples, cfg.samples);
    set(&mut t.replications, cfg.replications);
    setf(&mut t.alpha, cfg.alpha);
    if let Some(m) = cfg.verify.m_sweep.clone() {
        t.m_sweep = m;
    }
    setf(&mut t.tv_threshold, cfg.verify.tv_threshold);
    setf(&mut t.rel_tol, cfg.verify.rel_tol);
    setf(&mut t.min_expected_count, cfg.verify.min_expected_count);
    setf(&mut t.kappa, cfg.density.kappa);
    setf(&mut t.a, cfg.density.a);
    set(&mut t.exact_bins, cfg.density.exact_bins);
    set(&mut t.envelope_bins, cfg.density.envelope_bins);
    if cfg
        .grid
        .scheme
        .is_some_and(|s| s != GridScheme::GeometricInVolume)
        || cfg.grid.radii.is_some()
    {
        return Err(CliError::Usage(
            "verification suites use geometric-in-volume grids; drop grid.scheme / grid.radii"
                .into(),
        ));
    }
    for (key, v) in [
        ("problem.dim", t.dim),
        ("replications", t.replications),
        ("samples", t.samples),
    ] {
        positive(v, key)?;
    }
    Ok(t)
}

fn run_verify(cfg: &RunConfig, seed: u64) -> Result<RunOutput, CliError> {
    let t = test_config(cfg, seed)?;
    let report = run_suite(&t)?;
    let echo = RunConfig {
        command: Some(Command::Verify),
        seed: Some(t.seed),
        samples: Some(t.samples),
        replications: Some(t.replications),
        alpha: Some(t.alpha),
        problem: ProblemSection {
            id: None,
            dim: Some(t.dim),
            norm: Some(t.norm),
            max_radius: Some(t.max_radius),
        },
        grid: GridSection {
            scheme: None,
            levels: (t.suite != Suite::DensityProfile).then_some(t.levels),
            min_radius: Some(t.min_radius),
            radii: None,
        },
        density: DensitySection {
            kappa: Some(t.kappa),
            a: Some(t.a),
            levels: (t.suite == Suite::DensityProfile).then_some(t.levels),
            exact_bins: Some(t.exact_bins),
            envelope_bins: Some(t.envelope_bins),
        },
        verify: VerifySection {
            suite: Some(t.suite),
            m_sweep: Some(t.m_sweep.clone()),
            tv_threshold: Some(t.tv_threshold),
            rel_tol: Some(t.rel_tol),
            min_expected_count: Some(t.min_expected_count),
        },
        ..RunConfig::default()
    };
    let mut bundle = ReportBundle::new(t.seed, to_json_value(&echo)?);
    let summary = report.to_text();
    let passed = report.passed;
    bundle.report = Some(report);
    Ok(RunOutput {
        bundle,
        csv: None,
        summary,
        passed: Some(passed),
    })
}
