//! Statistical verification suites.
//!
//! Each suite turns one property of the reuse chain or of the fresh-count law
//! into a list of [`Check`]s. A check stores its statistic, the threshold and
//! the relation between them, so the verdict can be recomputed from the report
//! alone. Suites are deterministic in `(config, seed)`: replications draw from
//! [`substream`] and are collected in index order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::complexity::{
    chernoff_tail, density_empirical_with_fault, exact_fresh_dist_equal, poisson_tails,
    relative_tail, DensityConfig, DensityParams, FreshCountDist,
};
use crate::error::{Error, Result};
use crate::estimator::{build_grid, GridScheme, GridSpec};
use crate::geometry::NormKind;
use crate::problem::{BuiltinProblem, ProblemDef};
use crate::reuse::{run_chain_with_fault, Fault};
use crate::rng::{substream, LANE_CHAIN};
use crate::stats::{chi_square_uniform, dkw_margin, ks_one_sample};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;

/// Pooled final-level samples below this make the uniformity tests meaningless.
pub const MIN_POOLED_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ReuseUniformity,
    PoissonDominance,
    PoissonConvergence,
    ComplexityTails,
    DensityProfile,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::ReuseUniformity,
        Suite::PoissonDominance,
        Suite::PoissonConvergence,
        Suite::ComplexityTails,
        Suite::DensityProfile,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::ReuseUniformity => "reuse-uniformity",
            Suite::PoissonDominance => "poisson-dominance",
            Suite::PoissonConvergence => "poisson-convergence",
            Suite::ComplexityTails => "complexity-tails",
            Suite::DensityProfile => "density-profile",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|x| x.as_str()).collect();
                Error::invalid(
                    "suite",
                    format!("unknown suite `{s}` (expected one of {})", names.join(", ")),
                )
            })
    }
}

/// Seeded defects a suite must detect.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    UnfilteredReuse,
    WrongRadialLaw,
    FreshCountOffByOne,
    /// `lambda` computed as if `d = 1`.
    WrongVolumeExponent,
}

impl Mutation {
    fn fault(self) -> Fault {
        match self {
            Mutation::UnfilteredReuse => Fault::UnfilteredReuse,
            Mutation::WrongRadialLaw => Fault::WrongRadialLaw,
            Mutation::FreshCountOffByOne => Fault::FreshCountOffByOne,
            Mutation::None | Mutation::WrongVolumeExponent => Fault::None,
        }
    }
}

/// Parameters of one suite run. Fields a suite does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub suite: Suite,
    pub dim: usize,
    pub norm: NormKind,
    pub max_radius: f64,
    pub min_radius: f64,
    pub levels: usize,
    pub samples: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Grid sizes for the convergence sweep.
    pub m_sweep: Vec<usize>,
    /// Largest acceptable total-variation distance at the end of the sweep.
    pub tv_threshold: f64,
    pub kappa: f64,
    pub a: f64,
    pub exact_bins: usize,
    pub envelope_bins: usize,
    /// Relative tolerance of the density match below the peak radius.
    pub rel_tol: f64,
    /// Pooled expected count a bin needs before its relative error is checked.
    pub min_expected_count: f64,
    #[serde(default, skip_serializing_if = "is_no_mutation")]
    pub mutation: Mutation,
}

fn is_no_mutation(m: &Mutation) -> bool {
    *m == Mutation::None
}

impl TestConfig {
    /// Shipped configuration of `suite`.
    ///
    /// The chain suites use `d = 2`, `N = 100` and a volume span of `e^0.1`,
    /// so `lambda = 10`. The density suite uses `d = 2`, `kappa = e^0.05`,
    /// `a = 100`, which also gives `lambda = N d ln kappa = 10`.
    pub fn default_for(suite: Suite) -> TestConfig {
        let base = TestConfig {
            suite,
            dim: 2,
            norm: NormKind::Euclidean,
            max_radius: 1.0,
            min_radius: (-0.05f64).exp(),
            levels: 11,
            samples: 100,
            replications: 2000,
            seed: DEFAULT_SEED,
            alpha: 0.01,
            m_sweep: vec![2, 5, 20, 100],
            tv_threshold: 1e-3,
            kappa: 0.05f64.exp(),
            a: 100.0,
            exact_bins: 20,
            envelope_bins: 1,
            rel_tol: 0.15,
            min_expected_count: 50.0,
            mutation: Mutation::None,
        };
        match suite {
            Suite::ReuseUniformity => TestConfig {
                min_radius: 0.5,
                levels: 20,
                samples: 1000,
                replications: 10,
                ..base
            },
            Suite::DensityProfile => TestConfig {
                levels: 400,
                replications: 4000,
                ..base
            },
            _ => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if self.levels == 0 {
            return Err(Error::invalid("levels", "must be at least 1"));
        }
        Ok(())
    }

    fn grid(&self) -> Result<GridSpec> {
        let min = (self.levels > 1).then_some(self.min_radius);
        build_grid(
            self.max_radius,
            self.levels,
            GridScheme::GeometricInVolume,
            min,
        )
    }

    fn exponent(&self) -> f64 {
        if self.mutation == Mutation::WrongVolumeExponent {
            1.0
        } else {
            self.dim as f64
        }
    }

    /// `lambda = N d ln(max_radius / min_radius)` for a multi-level grid.
    fn lambda(&self, grid: &GridSpec) -> f64 {
        let radii = grid.radii();
        let span = (radii[0] / radii[radii.len() - 1]).ln();
        self.samples as f64 * self.exponent() * span
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    pub fn holds(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Relation::Lt => statistic < threshold,
            Relation::Le => statistic <= threshold,
            Relation::Gt => statistic > threshold,
            Relation::Ge => statistic >= threshold,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }
}

/// One pass/fail comparison: passes iff `statistic relation threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The property under test.
    pub claim: String,
    pub statistic: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(
        name: impl Into<String>,
        claim: impl Into<String>,
        statistic: f64,
        relation: Relation,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Check {
        Check {
            name: name.into(),
            claim: claim.into(),
            statistic,
            relation,
            threshold,
            passed: relation.holds(statistic, threshold),
            detail: detail.into(),
        }
    }
}

/// A recorded number that is not itself compared against anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub suite: Suite,
    pub config: TestConfig,
    pub checks: Vec<Check>,
    pub observations: Vec<Observation>,
    pub passed: bool,
}

impl TestReport {
    fn new(config: &TestConfig, checks: Vec<Check>, observations: Vec<Observation>) -> TestReport {
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        TestReport {
            schema_version: REPORT_SCHEMA_VERSION,
            suite: config.suite,
            config: config.clone(),
            checks,
            observations,
            passed,
        }
    }

    /// Recomputes every verdict from the stored statistics and thresholds and
    /// returns `true` if they agree with the recorded ones.
    pub fn audit(&self) -> bool {
        let each = self
            .checks
            .iter()
            .all(|c| c.relation.holds(c.statistic, c.threshold) == c.passed);
        let overall = !self.checks.is_empty() && self.checks.iter().all(|c| c.passed);
        each && overall == self.passed
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn observation(&self, name: &str) -> Option<f64> {
        self.observations
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
        let name_w = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(5);
        let mut out = format!(
            "suite {}  seed {}  alpha {}  => {}\n",
            self.suite,
            self.config.seed,
            self.config.alpha,
            verdict(self.passed)
        );
        out += &format!(
            "{:<name_w$}  {:>24}  {:>2}  {:>24}  verdict\n",
            "check", "statistic", "", "threshold"
        );
        for c in &self.checks {
            out += &format!(
                "{:<name_w$}  {:>24.16e}  {:>2}  {:>24.16e}  {}\n",
                c.name,
                c.statistic,
                c.relation.as_str(),
                c.threshold,
                verdict(c.passed)
            );
            if !c.detail.is_empty() {
                out += &format!("{:<name_w$}  {}\n", "", c.detail);
            }
        }
        for o in &self.observations {
            out += &format!("  {} = {:.16e}\n", o.name, o.value);
        }
        out
    }
}

fn obs(name: impl Into<String>, value: f64) -> Observation {
    Observation {
        name: name.into(),
        value,
    }
}

/// Runs the suite named in `cfg`.
pub fn run_suite(cfg: &TestConfig) -> Result<TestReport> {
    match cfg.suite {
        Suite::ReuseUniformity => test_reuse_uniformity(cfg),
        Suite::PoissonDominance => test_poisson_dominance(cfg),
        Suite::PoissonConvergence => test_poisson_convergence(cfg),
        Suite::ComplexityTails => test_complexity_tails(cfg),
        Suite::DensityProfile => test_density_profile(cfg),
    }
}

fn chain_problem(cfg: &TestConfig) -> Result<ProblemDef<BuiltinProblem>> {
    ProblemDef::new(cfg.dim, cfg.norm, cfg.max_radius, BuiltinProblem::Zero)
}

/// Angular sector of `(x0, x1)` among `sectors` equal slices of the circle.
fn sector(x0: f64, x1: f64, sectors: usize) -> usize {
    let t = x1.atan2(x0).rem_euclid(std::f64::consts::TAU);
    ((t / std::f64::consts::TAU * sectors as f64) as usize).min(sectors - 1)
}

/// Pools the final-level samples of `replications` chains and tests
/// `(||Z|| / rho_m)^d ~ U(0, 1)`; for `d >= 2` also tests that the angle of
/// `(z_0, z_1)` falls evenly into sectors of equal measure (16 for the
/// euclidean norm, 8 of 45 degrees for the sup and one norms, which are
/// invariant under the dihedral group of the square).
pub fn test_reuse_uniformity(cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let problem = chain_problem(cfg)?;
    let fault = cfg.mutation.fault();
    let rho_m = grid.radii()[grid.len() - 1];
    let pooled: Vec<Vec<(f64, Vec<f64>)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(cfg.seed, LANE_CHAIN, rep as u64);
            let run = run_chain_with_fault(&problem, &grid, cfg.samples, &mut rng, fault, |_| {})?;
            Ok(run
                .final_records
                .into_iter()
                .map(|r| (r.delta_norm(), r.delta().coords().to_vec()))
                .collect())
        })
        .collect::<Result<_>>()?;
    let samples: Vec<(f64, Vec<f64>)> = pooled.into_iter().flatten().collect();
    if samples.len() < MIN_POOLED_SAMPLES {
        return Err(Error::Config(format!(
            "only {} pooled final-level samples; need at least {MIN_POOLED_SAMPLES}",
            samples.len()
        )));
    }

    let d = cfg.dim as i32;
    let scaled: Vec<f64> = samples.iter().map(|(n, _)| (n / rho_m).powi(d)).collect();
    let ks = ks_one_sample(&scaled, |x| x.clamp(0.0, 1.0));
    let outside = scaled.iter().filter(|x| **x > 1.0).count();
    let mut checks = vec![Check::new(
        "radial-ks",
        "reused and fresh samples are jointly uniform in the final ball (radial law)",
        ks.p_value,
        Relation::Gt,
        cfg.alpha,
        format!(
            "KS D = {:.6e} over n = {}, {} samples outside the final ball",
            ks.statistic, ks.n, outside
        ),
    )];
    let mut observations = vec![
        obs("ks_statistic", ks.statistic),
        obs("pooled_samples", ks.n as f64),
    ];

    if cfg.dim >= 2 {
        let sectors = if cfg.norm == NormKind::Euclidean {
            16
        } else {
            8
        };
        let mut counts = vec![0u64; sectors];
        for (_, x) in &samples {
            counts[sector(x[0], x[1], sectors)] += 1;
        }
        let chi = chi_square_uniform(&counts);
        checks.push(Check::new(
            "angular-chi-square",
            "reused and fresh samples are jointly uniform in the final ball (direction)",
            chi.p_value,
            Relation::Gt,
            cfg.alpha,
            format!(
                "X^2 = {:.6e} with {} dof over {sectors} sectors",
                chi.statistic, chi.dof
            ),
        ));
        observations.push(obs("chi_square_statistic", chi.statistic));
    }
    Ok(TestReport::new(cfg, checks, observations))
}

fn exact_dist(cfg: &TestConfig, grid: &GridSpec) -> Result<FreshCountDist> {
    exact_fresh_dist_equal(cfg.samples, &grid.volume_ratios(cfg.dim))
}

fn zero_mass_check(dist: &FreshCountDist, lambda: f64) -> Check {
    let f0 = dist.cdf(0);
    Check::new(
        "exact-cdf-at-zero",
        "the exact fresh-count CDF equals exp(-lambda) at zero",
        (f0 - (-lambda).exp()).abs(),
        Relation::Le,
        1e-10,
        format!("F(0) = {f0:.16e}, exp(-lambda) = {:.16e}", (-lambda).exp()),
    )
}

/// Exact and empirical dominance of the fresh-count CDF over the Poisson CDF.
pub fn test_poisson_dominance(cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let lambda = cfg.lambda(&grid);
    let dist = exact_dist(cfg, &grid)?;
    let top = dist.quantile(0.9999);
    let violations: Vec<usize> = (1..=top)
        .filter(|&k| !dist.tails(k).cdf_exceeds(&poisson_tails(k, lambda)))
        .collect();
    let mut checks = vec![
        zero_mass_check(&dist, lambda),
        Check::new(
            "exact-dominance",
            "the exact fresh-count CDF lies strictly above the Poisson CDF for k >= 1",
            violations.len() as f64,
            Relation::Le,
            0.0,
            format!(
                "k = 1..={top}; first violations: {:?}",
                violations.iter().take(5).collect::<Vec<_>>()
            ),
        ),
    ];

    let problem = chain_problem(cfg)?;
    let fault = cfg.mutation.fault();
    let counts: Vec<usize> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(cfg.seed, LANE_CHAIN, rep as u64);
            run_chain_with_fault(&problem, &grid, cfg.samples, &mut rng, fault, |_| {})
                .map(|run| run.trace.fresh_after_first())
        })
        .collect::<Result<_>>()?;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max + 1];
    for &c in &counts {
        hist[c] += 1;
    }
    let reps = cfg.replications as f64;
    let margin = dkw_margin(cfg.replications, cfg.alpha);
    let mut acc = 0usize;
    let mut worst = f64::INFINITY;
    let mut worst_k = 0;
    for (k, h) in hist.iter().enumerate() {
        acc += h;
        let gap = acc as f64 / reps - poisson_tails(k, lambda).cdf;
        if gap < worst {
            worst = gap;
            worst_k = k;
        }
    }
    checks.push(Check::new(
        "empirical-dominance",
        "the empirical fresh-count CDF stays above the Poisson CDF up to a DKW band",
        worst,
        Relation::Ge,
        -margin,
        format!("worst k = {worst_k} over {} chains", cfg.replications),
    ));
    let emp_mean = counts.iter().sum::<usize>() as f64 / reps;
    let observations = vec![
        obs("lambda", lambda),
        obs("exact_mean", dist.mean()),
        obs("empirical_mean", emp_mean),
        obs("dkw_margin", margin),
    ];
    Ok(TestReport::new(cfg, checks, observations))
}

/// Total-variation distance to Poisson(`lambda`) across a refinement sweep
/// with the volume span held fixed.
pub fn test_poisson_convergence(cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    if cfg.m_sweep.is_empty() || cfg.m_sweep.contains(&0) {
        return Err(Error::invalid(
            "m_sweep",
            "must be a nonempty list of positive grid sizes",
        ));
    }
    if !(cfg.min_radius > 0.0 && cfg.min_radius <= cfg.max_radius) {
        return Err(Error::invalid("min_radius", "must lie in (0, max_radius]"));
    }
    let log_span = cfg.dim as f64 * (cfg.max_radius / cfg.min_radius).ln();
    let lambda = cfg.samples as f64 * cfg.exponent() * (cfg.max_radius / cfg.min_radius).ln();
    let mut tvs = Vec::with_capacity(cfg.m_sweep.len());
    let mut observations = vec![obs("lambda", lambda)];
    for &m in &cfg.m_sweep {
        let ratios = if m > 1 {
            vec![(-log_span / (m - 1) as f64).exp(); m - 1]
        } else {
            Vec::new()
        };
        let tv = exact_fresh_dist_equal(cfg.samples, &ratios)?.tv_to_poisson(lambda);
        observations.push(obs(format!("tv_m{m}"), tv));
        tvs.push(tv);
    }
    let rise = tvs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let rise = if rise.is_finite() { rise } else { 0.0 };
    let last = *tvs.last().unwrap_or(&f64::NAN);
    let checks = vec![
        Check::new(
            "tv-non-increasing",
            "the fresh-count law approaches Poisson(lambda) as the grid is refined",
            rise,
            Relation::Le,
            1e-12,
            format!("largest step-to-step increase over m = {:?}", cfg.m_sweep),
        ),
        Check::new(
            "tv-final",
            "the fresh-count law approaches Poisson(lambda) as the grid is refined",
            last,
            Relation::Lt,
            cfg.tv_threshold,
            format!("m = {}", cfg.m_sweep[cfg.m_sweep.len() - 1]),
        ),
    ];
    Ok(TestReport::new(cfg, checks, observations))
}

const RELATIVE_EPS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Exact upper tails against the Chernoff, `e lambda` and relative bounds.
pub fn test_complexity_tails(cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let lambda = cfg.lambda(&grid);
    let dist = exact_dist(cfg, &grid)?;
    let observations = vec![obs("lambda", lambda), obs("exact_mean", dist.mean())];
    if lambda <= 0.0 {
        let check = Check::new(
            "degenerate",
            "with lambda = 0 no fresh samples are drawn after the first level",
            dist.tail_at_least(1),
            Relation::Le,
            0.0,
            "all tail bounds are vacuous",
        );
        return Ok(TestReport::new(cfg, vec![check], observations));
    }

    let lo = lambda.floor() as usize + 1;
    let hi = (3.0 * lambda).floor() as usize;
    let mut worst = 0.0f64;
    let mut worst_k = None;
    for k in lo..=hi {
        let ratio = dist.tail_at_least(k) / chernoff_tail(lambda, k as f64)?;
        if worst_k.is_none() || ratio > worst {
            worst = ratio;
            worst_k = Some(k);
        }
    }
    let chernoff_detail = match worst_k {
        Some(k) => {
            format!("max of Pr{{sum >= k}} / bound over k = {lo}..={hi}, attained at k = {k}")
        }
        None => format!("no integer k in ({lambda}, {}]", 3.0 * lambda),
    };

    let e_lambda = (std::f64::consts::E * lambda).ceil() as usize;
    let at_e = dist.tail_at_least(e_lambda);

    let mut rel_worst = 0.0f64;
    let mut rel_eps = RELATIVE_EPS[0];
    for eps in RELATIVE_EPS {
        let k = ((1.0 + eps) * lambda).ceil() as usize;
        let ratio = dist.tail_at_least(k) / relative_tail(lambda, eps)?;
        if ratio > rel_worst {
            rel_worst = ratio;
            rel_eps = eps;
        }
    }

    let checks = vec![
        Check::new(
            "chernoff",
            "Pr{sum n >= k} <= exp(-lambda) (lambda e / k)^k for every integer k in (lambda, 3 lambda]",
            worst,
            Relation::Le,
            1.0,
            chernoff_detail,
        ),
        Check::new(
            "e-lambda",
            "Pr{sum n >= e lambda} <= exp(-lambda)",
            at_e,
            Relation::Le,
            (-lambda).exp(),
            format!("k = {e_lambda}"),
        ),
        Check::new(
            "relative",
            "Pr{sum n >= (1 + eps) lambda} <= exp(-eps^2 lambda / 4) for eps in 0.1..0.9",
            rel_worst,
            Relation::Le,
            1.0,
            format!("max of tail / bound, attained at eps = {rel_eps}"),
        ),
    ];
    Ok(TestReport::new(cfg, checks, observations))
}

fn density_config(cfg: &TestConfig) -> DensityConfig {
    DensityConfig {
        params: DensityParams {
            n: cfg.samples,
            dim: cfg.dim,
            kappa: cfg.kappa,
            a: cfg.a,
        },
        norm: cfg.norm,
        levels: cfg.levels,
        exact_bins: cfg.exact_bins,
        envelope_bins: cfg.envelope_bins,
        replications: cfg.replications,
        seed: cfg.seed,
    }
}

/// Empirical fresh-sample density over a dense chain on `[a/kappa, a]`.
///
/// Below the peak radius the profile must match the limiting density within
/// `rel_tol` on bins whose pooled expected count reaches
/// `min_expected_count`; above it, it must stay under the envelope plus a
/// normal-approximation margin. Adjacent-bin reversals larger than the same
/// margin count against unimodality. Both margins use a Bonferroni-corrected
/// `alpha` over the bins involved.
pub fn test_density_profile(cfg: &TestConfig) -> Result<TestReport> {
    cfg.validate()?;
    let dcfg = density_config(cfg);
    let profile = density_empirical_with_fault(&dcfg, cfg.mutation.fault())?;
    let params = dcfg.params;
    let reps = cfg.replications as f64;
    let peak = params.peak_radius();
    let bins = &profile.bins;
    let nbins = bins.len();
    let z = Normal::new(0.0, 1.0)
        .map_err(|e| Error::Config(e.to_string()))?
        .inverse_cdf(1.0 - cfg.alpha / (2.0 * nbins as f64));
    // standard error of a bin's per-replication density, Poisson approximation
    let se = |i: usize| (bins[i].empirical * bins[i].width() / reps).sqrt() / bins[i].width();

    let mut checks = Vec::new();
    let pk = profile.peak_index();
    if cfg.dim >= 2 {
        let off = (bins[pk].center - peak).abs() / bins[pk].width();
        checks.push(Check::new(
            "peak-location",
            "the density is largest at a/kappa",
            off,
            Relation::Le,
            1.0,
            format!(
                "peak bin center {:.6e}, a/kappa = {peak:.6e}; statistic in bin widths",
                bins[pk].center
            ),
        ));
    }

    let mut reversals = 0usize;
    for i in 0..nbins - 1 {
        let tol = z * (se(i).powi(2) + se(i + 1).powi(2)).sqrt();
        let rising = bins[i + 1].center <= peak;
        let bad = if rising {
            bins[i].empirical > bins[i + 1].empirical + tol
        } else {
            bins[i + 1].empirical > bins[i].empirical + tol
        };
        reversals += bad as usize;
    }
    checks.push(Check::new(
        "unimodal",
        "the density rises up to a/kappa and falls after it",
        reversals as f64,
        Relation::Le,
        0.0,
        format!("adjacent-bin reversals beyond {z:.3} standard errors"),
    ));

    let mut rel_worst = 0.0f64;
    let mut rel_bins = 0usize;
    let mut env_worst = f64::NEG_INFINITY;
    for (i, b) in bins.iter().enumerate() {
        let mean_density = b.expected_count / b.width();
        if b.hi <= peak {
            if b.expected_count * reps >= cfg.min_expected_count {
                rel_bins += 1;
                rel_worst = rel_worst.max((b.empirical - mean_density).abs() / mean_density);
            }
        } else {
            env_worst =
                env_worst.max((b.empirical - mean_density) / (z * se(i)).max(f64::MIN_POSITIVE));
        }
    }
    checks.push(Check::new(
        "exact-region-relative-error",
        "below a/kappa the density is (N d / rho)(kappa rho / a)^d",
        rel_worst,
        Relation::Le,
        cfg.rel_tol,
        format!(
            "max relative error over {rel_bins} bins with pooled expected count >= {}",
            cfg.min_expected_count
        ),
    ));
    checks.push(Check::new(
        "envelope",
        "above a/kappa the density is at most N d / rho",
        env_worst,
        Relation::Le,
        1.0,
        "max of (empirical - envelope) / margin over bins above a/kappa",
    ));

    let bound = params.n as f64 * (1.0 + params.dim as f64 * params.kappa.ln());
    let mean_se = (profile.var_total_fresh / reps).sqrt();
    checks.push(Check::new(
        "total-mass",
        "the expected number of fresh samples is at most N (1 + d ln kappa)",
        profile.mean_total_fresh,
        Relation::Le,
        bound + z * mean_se,
        format!("bound {bound:.6e} plus {z:.3} standard errors"),
    ));
    let observations = vec![
        obs("mean_total_fresh", profile.mean_total_fresh),
        obs("peak_radius", peak),
        obs("lambda", params.lambda()),
        obs("margin_z", z),
    ];
    Ok(TestReport::new(cfg, checks, observations))
}
