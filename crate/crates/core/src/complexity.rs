//! Exact and limiting laws of the fresh-sample count.
//!
//! With sample sizes `N_1 <= ... <= N_m` and volume ratios
//! `p_l = v_l / v_{l-1}`, the fresh counts `n_l` (l >= 2) of a reuse chain are
//! independent with
//!
//! ```text
//! Pr{n_l = n} = C(N_{l-1}, N_l - n) p_l^(N_l - n) (1 - p_l)^(N_{l-1} - N_l + n),
//!               N_l - N_{l-1} <= n <= N_l,
//! ```
//!
//! so the law of `sum n_l` is their convolution. Its CDF dominates that of a
//! Poisson variable with mean `lambda = N ln(V_max / V_min)` (equal sizes),
//! with equality at zero, and converges to it as the grid is refined.
//!
//! CDF comparisons are made on whichever tail is small, since both CDFs round
//! to 1.0 long before the comparison stops being meaningful.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::estimator::{build_grid, GridScheme};
use crate::geometry::NormKind;
use crate::problem::{BuiltinProblem, ProblemDef};
use crate::reuse::{run_chain_with_fault, Fault};
use crate::rng::{substream, LANE_DENSITY};

/// Entries below this are dropped from the convolution, with their mass
/// accounted for in [`FreshCountDist::dropped_mass`].
pub const PMF_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonRef {
    pub lambda: f64,
}

pub fn poisson_lambda(n: usize, log_v_max: f64, log_v_min: f64) -> Result<PoissonRef> {
    if !(log_v_max >= log_v_min) {
        return Err(Error::invalid(
            "log_v_max",
            format!("must be >= log_v_min ({log_v_max} < {log_v_min})"),
        ));
    }
    Ok(PoissonRef {
        lambda: n as f64 * (log_v_max - log_v_min),
    })
}

/// `lambda` itself: a strict upper bound on `E[sum_{l>=2} n_l]` whenever
/// `lambda > 0`.
pub fn expected_fresh_upper(reference: &PoissonRef) -> f64 {
    reference.lambda
}

/// Lower and upper tail of a discrete law at `k`: `cdf = Pr{X <= k}`,
/// `sf = Pr{X > k}`, each summed from its own terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPair {
    pub cdf: f64,
    pub sf: f64,
}

impl TailPair {
    /// `true` if this CDF is strictly above `other`'s at the same point,
    /// judged on the tail that is not rounded away.
    pub fn cdf_exceeds(&self, other: &TailPair) -> bool {
        if self.cdf.max(other.cdf) <= 0.5 {
            self.cdf > other.cdf
        } else {
            self.sf < other.sf
        }
    }
}

pub fn poisson_ln_pmf(k: usize, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)
}

pub fn poisson_pmf(k: usize, lambda: f64) -> f64 {
    poisson_ln_pmf(k, lambda).exp()
}

pub fn poisson_tails(k: usize, lambda: f64) -> TailPair {
    let cdf: f64 = (0..=k).map(|i| poisson_pmf(i, lambda)).sum();
    // upper tail: walk up from k+1 until terms are negligible past the mode
    let mut sf = 0.0;
    let mut i = k + 1;
    loop {
        let t = poisson_pmf(i, lambda);
        sf += t;
        if (i as f64 > lambda && t <= sf * 1e-17) || t == 0.0 && i as f64 > lambda {
            break;
        }
        i += 1;
    }
    TailPair {
        cdf: cdf.min(1.0),
        sf,
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `B(k, n, p) = C(n, k) p^k (1-p)^(n-k)`.
pub fn binomial_pmf(k: usize, n: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// The whole `Binomial(n, p)` pmf, renormalized so that the rounding in
/// `ln_gamma` does not accumulate through convolutions.
pub fn binomial_pmf_vec(n: usize, p: f64) -> Vec<f64> {
    let mut pmf: Vec<f64> = (0..=n).map(|i| binomial_pmf(i, n, p)).collect();
    let total: f64 = pmf.iter().sum();
    for x in pmf.iter_mut() {
        *x /= total;
    }
    pmf
}

pub fn binomial_tails(k: usize, n: usize, p: f64) -> TailPair {
    let k = k.min(n);
    let pmf = binomial_pmf_vec(n, p);
    TailPair {
        cdf: pmf[..=k].iter().sum::<f64>().min(1.0),
        sf: pmf[k + 1..].iter().rev().sum(),
    }
}

fn check_theta_k(theta: f64, n: usize, k: usize) -> Result<()> {
    if !(theta > 1.0 && theta.is_finite()) {
        return Err(Error::invalid(
            "theta",
            format!("must exceed 1, got {theta}"),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid("k", format!("must be <= n = {n}, got {k}")));
    }
    Ok(())
}

/// Both tails of `L(theta, k) = sum_{i<=k} C(N,i) (1-1/theta)^i theta^{-(N-i)}`.
pub fn binomial_tails_l(theta: f64, n: usize, k: usize) -> Result<TailPair> {
    check_theta_k(theta, n, k)?;
    Ok(binomial_tails(k, n, 1.0 - 1.0 / theta))
}

/// Both tails of `L_P(theta, k)`, the Poisson(`N ln theta`) CDF at `k`.
pub fn poisson_tails_lp(theta: f64, n: usize, k: usize) -> Result<TailPair> {
    check_theta_k(theta, n, k)?;
    Ok(poisson_tails(k, n as f64 * theta.ln()))
}

pub fn binomial_cdf_l(theta: f64, n: usize, k: usize) -> Result<f64> {
    binomial_tails_l(theta, n, k).map(|t| t.cdf)
}

pub fn poisson_cdf_lp(theta: f64, n: usize, k: usize) -> Result<f64> {
    poisson_tails_lp(theta, n, k).map(|t| t.cdf)
}

/// Law of one level's fresh count, supported on `min..min + pmf.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLaw {
    pub min: usize,
    pub pmf: Vec<f64>,
}

/// Exact law of `sum_{l>=2} n_l`; `pmf[k] = Pr{sum = k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshCountDist {
    pub pmf: Vec<f64>,
    pub per_level: Vec<LevelLaw>,
    /// Probability discarded by the [`PMF_FLOOR`] trimming.
    pub dropped_mass: f64,
}

impl FreshCountDist {
    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn tails(&self, k: usize) -> TailPair {
        let split = (k + 1).min(self.pmf.len());
        TailPair {
            cdf: self.pmf[..split].iter().sum::<f64>().min(1.0),
            sf: self.pmf[split..].iter().rev().sum(),
        }
    }

    pub fn cdf(&self, k: usize) -> f64 {
        self.tails(k).cdf
    }

    /// `Pr{sum >= k}`.
    pub fn tail_at_least(&self, k: usize) -> f64 {
        if k == 0 {
            return self.total_mass();
        }
        self.tails(k - 1).sf
    }

    /// Smallest `k` with `Pr{sum <= k} >= q`.
    pub fn quantile(&self, q: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in self.pmf.iter().enumerate() {
            acc += p;
            if acc >= q {
                return k;
            }
        }
        self.pmf.len().saturating_sub(1)
    }

    /// Total-variation distance to Poisson(`lambda`), including the Poisson
    /// mass beyond the stored support.
    pub fn tv_to_poisson(&self, lambda: f64) -> f64 {
        let last = self.pmf.len() - 1;
        let body: f64 = self
            .pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (p - poisson_pmf(k, lambda)).abs())
            .sum();
        0.5 * (body + poisson_tails(last, lambda).sf)
    }
}

/// Exact law for the given per-level sample sizes and volume ratios
/// (`ratios[i] = v_{i+2} / v_{i+1}`).
pub fn exact_fresh_dist(sample_sizes: &[usize], volume_ratios: &[f64]) -> Result<FreshCountDist> {
    if sample_sizes.is_empty() {
        return Err(Error::invalid("sample_sizes", "need at least one level"));
    }
    if volume_ratios.len() + 1 != sample_sizes.len() {
        return Err(Error::invalid(
            "volume_ratios",
            format!(
                "expected {} ratios for {} levels, got {}",
                sample_sizes.len() - 1,
                sample_sizes.len(),
                volume_ratios.len()
            ),
        ));
    }
    if sample_sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("sample_sizes", "must be nondecreasing"));
    }
    if let Some(bad) = volume_ratios.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::invalid(
            "volume_ratios",
            format!("each ratio must lie in (0, 1], got {bad}"),
        ));
    }

    let mut per_level = Vec::with_capacity(volume_ratios.len());
    let mut pmf = vec![1.0];
    let mut dropped = 0.0;
    for (w, &p) in sample_sizes.windows(2).zip(volume_ratios) {
        let (prev, cur) = (w[0], w[1]);
        let min = cur - prev;
        // n = cur - k where k ~ Binomial(prev, p) counts reused records
        let reused = binomial_pmf_vec(prev, p);
        let law: Vec<f64> = (min..=cur).map(|n| reused[cur - n]).collect();
        let mut next = vec![0.0; pmf.len() + cur];
        for (i, &a) in pmf.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in law.iter().enumerate() {
                next[i + min + j] += a * b;
            }
        }
        while next.len() > 1 && next[next.len() - 1] < PMF_FLOOR {
            dropped += next.pop().unwrap_or(0.0);
        }
        for x in next.iter_mut() {
            if *x < PMF_FLOOR {
                dropped += *x;
                *x = 0.0;
            }
        }
        pmf = next;
        per_level.push(LevelLaw { min, pmf: law });
    }
    Ok(FreshCountDist {
        pmf,
        per_level,
        dropped_mass: dropped,
    })
}

/// Equal sample size `n` at every level.
pub fn exact_fresh_dist_equal(n: usize, volume_ratios: &[f64]) -> Result<FreshCountDist> {
    exact_fresh_dist(&vec![n; volume_ratios.len() + 1], volume_ratios)
}

/// `Pr{X >= k} <= e^{-lambda} (lambda e / k)^k` for Poisson `X`, `k > lambda`.
pub fn chernoff_tail(lambda: f64, k: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain {
            bound: "chernoff_tail",
            reason: format!("lambda must be positive, got {lambda}"),
        });
    }
    if !(k >= lambda) {
        return Err(Error::Domain {
            bound: "chernoff_tail",
            reason: format!("k = {k} is below the mean {lambda}"),
        });
    }
    Ok((-lambda + k * (lambda.ln() + 1.0 - k.ln())).exp().min(1.0))
}

fn check_eps(lambda: f64, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(
            "eps",
            format!("must lie in (0, 1), got {eps}"),
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(
            "lambda",
            format!("must be positive, got {lambda}"),
        ));
    }
    Ok(())
}

/// `exp(-eps^2 lambda / 4)`, bounding `Pr{sum n_l >= (1 + eps) lambda}`.
pub fn relative_tail(lambda: f64, eps: f64) -> Result<f64> {
    check_eps(lambda, eps)?;
    Ok((-eps * eps * lambda / 4.0).exp())
}

/// The sharper `(e^eps / (1+eps)^(1+eps))^lambda`, which sits below
/// [`relative_tail`].
pub fn relative_tail_sharp(lambda: f64, eps: f64) -> Result<f64> {
    check_eps(lambda, eps)?;
    Ok((lambda * (eps - (1.0 + eps) * eps.ln_1p())).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityFlag {
    /// The limiting density is known exactly here.
    Exact,
    /// Only the envelope `N d / rho` is known here.
    UpperBound,
}

impl DensityFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityFlag::Exact => "exact",
            DensityFlag::UpperBound => "upper-bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub n: usize,
    pub dim: usize,
    pub kappa: f64,
    pub a: f64,
}

impl DensityParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::invalid("density", "n and dim must be positive"));
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(
                "kappa",
                format!("must exceed 1, got {}", self.kappa),
            ));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::invalid(
                "a",
                format!("must be positive, got {}", self.a),
            ));
        }
        Ok(())
    }

    /// Radius of the innermost ball, `a / kappa`, where the density peaks.
    pub fn peak_radius(&self) -> f64 {
        self.a / self.kappa
    }

    /// `lambda = N d ln kappa`.
    pub fn lambda(&self) -> f64 {
        self.n as f64 * self.dim as f64 * self.kappa.ln()
    }

    /// Expected fresh samples with norm in `(lo, hi]` in the dense-grid limit:
    /// exact below the peak radius, the envelope integral above it.
    pub fn expected_in(&self, lo: f64, hi: f64) -> f64 {
        let (n, d, p) = (self.n as f64, self.dim as f64, self.peak_radius());
        let mut total = 0.0;
        let (elo, ehi) = (lo.min(p), hi.min(p));
        if ehi > elo {
            total += n * ((ehi / p).powf(d) - (elo / p).powf(d));
        }
        let (ulo, uhi) = (lo.max(p), hi.max(p));
        if uhi > ulo {
            total += n * d * (uhi / ulo).ln();
        }
        total
    }
}

/// Limiting density of fresh samples at radius `rho`, with its flag.
pub fn density_theoretical(rho: f64, params: &DensityParams) -> Result<(f64, DensityFlag)> {
    params.validate()?;
    if !(rho > 0.0 && rho <= params.a) {
        return Err(Error::invalid(
            "rho",
            format!("must lie in (0, {}], got {rho}", params.a),
        ));
    }
    let nd_over_rho = params.n as f64 * params.dim as f64 / rho;
    if rho <= params.peak_radius() {
        Ok((
            nd_over_rho * (params.kappa * rho / params.a).powi(params.dim as i32),
            DensityFlag::Exact,
        ))
    } else {
        Ok((nd_over_rho, DensityFlag::UpperBound))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityConfig {
    pub params: DensityParams,
    pub norm: NormKind,
    /// Grid levels on `[a/kappa, a]`.
    pub levels: usize,
    /// Equal-width bins on `(0, a/kappa]`.
    pub exact_bins: usize,
    /// Equal-width bins on `(a/kappa, a]`.
    pub envelope_bins: usize,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// Fresh samples per unit radius per replication.
    pub empirical: f64,
    /// Limiting density (or envelope) at the bin center.
    pub theoretical: f64,
    /// Limiting expected count in the bin per replication.
    pub expected_count: f64,
    pub flag: DensityFlag,
}

impl DensityBin {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityProfile {
    pub config: DensityConfig,
    pub bins: Vec<DensityBin>,
    /// Average of `N + sum n_l` over replications.
    pub mean_total_fresh: f64,
    /// Sample variance of `N + sum n_l` over replications.
    pub var_total_fresh: f64,
}

impl DensityProfile {
    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, b) in self.bins.iter().enumerate() {
            if b.empirical > self.bins[best].empirical {
                best = i;
            }
        }
        best
    }
}

/// Histogram of the norms of all fresh records over a dense chain on
/// `[a/kappa, a]`, averaged over replications and normalized by bin width.
pub fn density_empirical(config: &DensityConfig) -> Result<DensityProfile> {
    density_empirical_with_fault(config, Fault::None)
}

pub(crate) fn density_empirical_with_fault(
    config: &DensityConfig,
    fault: Fault,
) -> Result<DensityProfile> {
    let params = config.params;
    params.validate()?;
    if config.levels < 2 || config.exact_bins == 0 || config.envelope_bins == 0 {
        return Err(Error::invalid(
            "density",
            "need at least 2 levels and one bin on each side of a/kappa",
        ));
    }
    if config.replications == 0 {
        return Err(Error::invalid("replications", "must be at least 1"));
    }
    let peak = params.peak_radius();
    let mut edges: Vec<f64> = (0..=config.exact_bins)
        .map(|j| peak * j as f64 / config.exact_bins as f64)
        .collect();
    edges.extend(
        (1..=config.envelope_bins)
            .map(|j| peak + (params.a - peak) * j as f64 / config.envelope_bins as f64),
    );
    edges[config.exact_bins] = peak;
    let last = edges.len() - 1;
    edges[last] = params.a;
    let nbins = edges.len() - 1;

    let problem = ProblemDef::new(params.dim, config.norm, params.a, BuiltinProblem::Zero)?;
    let grid = build_grid(
        params.a,
        config.levels,
        GridScheme::GeometricInVolume,
        Some(peak),
    )?;

    let per_rep: Vec<(Vec<u64>, usize)> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(config.seed, LANE_DENSITY, rep as u64);
            let mut counts = vec![0u64; nbins];
            let run = run_chain_with_fault(&problem, &grid, params.n, &mut rng, fault, |view| {
                for r in view.fresh_records() {
                    let x = r.delta_norm();
                    let idx = edges
                        .partition_point(|e| *e < x)
                        .saturating_sub(1)
                        .min(nbins - 1);
                    counts[idx] += 1;
                }
            })?;
            Ok((counts, run.q_evaluations as usize))
        })
        .collect::<Result<_>>()?;

    let reps = config.replications as f64;
    let mut totals = vec![0u64; nbins];
    for (c, _) in &per_rep {
        for (t, x) in totals.iter_mut().zip(c) {
            *t += x;
        }
    }
    let fresh: Vec<f64> = per_rep.iter().map(|(_, f)| *f as f64).collect();
    let mean_total_fresh = fresh.iter().sum::<f64>() / reps;
    let var_total_fresh = if fresh.len() > 1 {
        fresh
            .iter()
            .map(|f| (f - mean_total_fresh).powi(2))
            .sum::<f64>()
            / (reps - 1.0)
    } else {
        0.0
    };

    let bins = (0..nbins)
        .map(|i| {
            let (lo, hi) = (edges[i], edges[i + 1]);
            let center = 0.5 * (lo + hi);
            let (theoretical, flag) = density_theoretical(center, &params)?;
            Ok(DensityBin {
                lo,
                hi,
                center,
                empirical: totals[i] as f64 / reps / (hi - lo),
                theoretical,
                expected_count: params.expected_in(lo, hi),
                flag,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DensityProfile {
        config: config.clone(),
        bins,
        mean_total_fresh,
        var_total_fresh,
    })
}
