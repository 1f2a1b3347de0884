//! Norm balls: volumes and exact uniform sampling.
//!
//! Every supported norm has a closed-form volume and a non-rejection
//! uniform sampler, so the per-sample cost does not depend on the dimension
//! the way rejection from the bounding cube does. Volumes are exposed in log
//! space as well because the ratios that matter downstream (`ln(V_max/V_min)`)
//! overflow or underflow quickly once `d` is in the dozens.
//!
//! Adding a norm means providing three things: `NormKind::eval`, a log-volume
//! in [`log_ball_volume`], and a branch in the sampler.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// The norm that defines the uncertainty ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Euclidean,
    Sup,
    /// Cross-polytope ball. Optional extension; not used by the shipped suites.
    One,
}

impl NormKind {
    pub fn eval(self, coords: &[f64]) -> f64 {
        match self {
            NormKind::Euclidean => coords.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::Sup => coords.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            NormKind::One => coords.iter().map(|x| x.abs()).sum(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Euclidean => "euclidean",
            NormKind::Sup => "sup",
            NormKind::One => "one",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "l2" => Ok(NormKind::Euclidean),
            "sup" | "max" | "linf" => Ok(NormKind::Sup),
            "one" | "l1" => Ok(NormKind::One),
            other => Err(Error::invalid(
                "norm",
                format!("unknown norm `{other}` (expected euclidean, sup or one)"),
            )),
        }
    }
}

/// A realization of the uncertainty vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// `{x in R^dim : ||x|| <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    dim: usize,
    radius: f64,
    norm: NormKind,
}

impl BallSpec {
    pub fn new(dim: usize, radius: f64, norm: NormKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(
                "radius",
                format!("must be positive and finite, got {radius}"),
            ));
        }
        Ok(BallSpec { dim, radius, norm })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        BallSpec::new(self.dim, radius, self.norm)
    }
}

/// Natural log of the Lebesgue measure of the ball.
pub fn log_ball_volume(spec: &BallSpec) -> f64 {
    let d = spec.dim as f64;
    let log_unit = match spec.norm {
        NormKind::Euclidean => 0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0),
        NormKind::Sup => d * 2f64.ln(),
        NormKind::One => d * 2f64.ln() - ln_gamma(d + 1.0),
    };
    log_unit + d * spec.radius.ln()
}

/// Lebesgue measure of the ball. May underflow or overflow for large `dim`;
/// prefer [`log_ball_volume`] for ratios.
pub fn ball_volume(spec: &BallSpec) -> f64 {
    match spec.norm {
        // exact in floating point for the common small cases
        NormKind::Sup => (2.0 * spec.radius).powi(spec.dim as i32),
        _ => log_ball_volume(spec).exp(),
    }
}

/// `ln(vol(outer) / vol(inner))` for two balls of the same dimension and norm.
pub fn log_volume_ratio(dim: usize, outer_radius: f64, inner_radius: f64) -> f64 {
    dim as f64 * (outer_radius.ln() - inner_radius.ln())
}

pub fn norm_of(p: &Point, kind: NormKind) -> f64 {
    kind.eval(p.coords())
}

/// Draws one point exactly uniformly from the ball.
pub fn sample_uniform_ball<R: Rng + ?Sized>(spec: &BallSpec, rng: &mut R) -> Point {
    let d = spec.dim;
    let rho = spec.radius;
    let coords = match spec.norm {
        NormKind::Euclidean => {
            let (dir, len) = gaussian_direction(d, rng);
            let u: f64 = rng.random();
            let scale = rho * u.powf(1.0 / d as f64) / len;
            dir.into_iter().map(|x| x * scale).collect()
        }
        NormKind::Sup => (0..d).map(|_| rho * symmetric_unit(rng)).collect(),
        NormKind::One => {
            // (E_1..E_d)/(E_1+..+E_{d+1}) is uniform on the positive simplex
            // interior; random signs spread it over the cross-polytope.
            let mut e: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = e.iter().sum::<f64>() + rng.sample::<f64, _>(Exp1);
            for x in e.iter_mut() {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                *x = sign * rho * *x / total;
            }
            e
        }
    };
    Point(clamp_to_ball(coords, spec))
}

// Rounding in the scale step can push the norm a few ulps past the radius.
fn clamp_to_ball(mut coords: Vec<f64>, spec: &BallSpec) -> Vec<f64> {
    while spec.norm.eval(&coords) > spec.radius {
        for x in coords.iter_mut() {
            *x *= 1.0 - f64::EPSILON;
        }
    }
    coords
}

/// Keeps the direction of a correct sample but redraws the radius with the
/// wrong power law. Only used to check that the verification suites notice.
pub(crate) fn sample_wrong_radial_law<R: Rng + ?Sized>(spec: &BallSpec, rng: &mut R) -> Point {
    let p = sample_uniform_ball(spec, rng);
    let n = norm_of(&p, spec.norm);
    let u: f64 = rng.random();
    let t = spec.radius * u.powf(1.0 / (spec.dim as f64 + 1.0));
    let scale = if n > 0.0 { t / n } else { 0.0 };
    Point(p.0.into_iter().map(|x| x * scale).collect())
}

fn gaussian_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> (Vec<f64>, f64) {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let len = NormKind::Euclidean.eval(&v);
        if len > 0.0 {
            return (v, len);
        }
    }
}

fn symmetric_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-1.0..=1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats::ks_one_sample;
    use proptest::prelude::*;
    use rand::Rng;

    fn ball(d: usize, r: f64, n: NormKind) -> BallSpec {
        BallSpec::new(d, r, n).unwrap()
    }

    #[test]
    fn volumes() {
        assert!((ball_volume(&ball(1, 1.0, NormKind::Euclidean)) - 2.0).abs() < 1e-12);
        assert_eq!(ball_volume(&ball(3, 1.0, NormKind::Sup)), 8.0);
        assert!((ball_volume(&ball(2, 2.0, NormKind::Euclidean)) - 4.0 * PI).abs() < 1e-12);
        assert!((ball_volume(&ball(3, 1.0, NormKind::Euclidean)) - 4.0 / 3.0 * PI).abs() < 1e-12);
        // octahedron |x|+|y|+|z| <= 1
        assert!((ball_volume(&ball(3, 1.0, NormKind::One)) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            BallSpec::new(0, 1.0, NormKind::Euclidean),
            Err(Error::Validation { field: "dim", .. })
        ));
        assert!(BallSpec::new(2, 0.0, NormKind::Sup).is_err());
        assert!(BallSpec::new(2, -1.0, NormKind::Sup).is_err());
        assert!(BallSpec::new(2, f64::NAN, NormKind::Sup).is_err());
    }

    #[test]
    fn volume_homogeneity() {
        for norm in [NormKind::Euclidean, NormKind::Sup, NormKind::One] {
            for d in 1..=6 {
                let base = ball_volume(&ball(d, 0.7, norm));
                for c in [0.5, 2.0, 10.0] {
                    let scaled = ball_volume(&ball(d, 0.7 * c, norm));
                    let expect = c.powi(d as i32) * base;
                    assert!(
                        ((scaled - expect) / expect).abs() < 1e-12,
                        "{norm} d={d} c={c}"
                    );
                }
            }
        }
    }

    #[test]
    fn norms() {
        let p = Point::new(vec![3.0, -4.0]);
        assert_eq!(norm_of(&p, NormKind::Euclidean), 5.0);
        assert_eq!(norm_of(&p, NormKind::Sup), 4.0);
        assert_eq!(norm_of(&p, NormKind::One), 7.0);
        let z = Point::new(vec![0.0; 5]);
        for k in [NormKind::Euclidean, NormKind::Sup, NormKind::One] {
            assert_eq!(norm_of(&z, k), 0.0);
        }
    }

    #[test]
    fn parse_norm() {
        assert_eq!("sup".parse::<NormKind>().unwrap(), NormKind::Sup);
        assert!("l3".parse::<NormKind>().is_err());
    }

    #[test]
    fn one_dim_mean_is_centred() {
        let spec = ball(1, 1.0, NormKind::Euclidean);
        let mut rng = substream(11, 0, 0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_uniform_ball(&spec, &mut rng).coords()[0])
            .sum::<f64>()
            / n as f64;
        // U(-1,1) has variance 1/3
        let se = (1.0 / 3.0 / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn disc_second_moment_matches_rejection_oracle() {
        let spec = ball(2, 1.0, NormKind::Euclidean);
        let n = 100_000;
        let mut rng = substream(12, 0, 0);
        let sq: Vec<f64> = (0..n)
            .map(|_| {
                let p = sample_uniform_ball(&spec, &mut rng);
                p.coords().iter().map(|x| x * x).sum()
            })
            .collect();
        let mean = sq.iter().sum::<f64>() / n as f64;
        let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se, "mean {mean}");

        // independent route: rejection from the square
        let mut rng = substream(13, 0, 0);
        let mut acc = Vec::with_capacity(n);
        while acc.len() < n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            if x * x + y * y <= 1.0 {
                acc.push(x * x + y * y);
            }
        }
        let oracle = acc.iter().sum::<f64>() / n as f64;
        assert!(
            (mean - oracle).abs() < 6.0 * se,
            "{mean} vs rejection {oracle}"
        );
    }

    #[test]
    fn disc_squared_radius_is_uniform() {
        let spec = ball(2, 1.0, NormKind::Euclidean);
        let mut rng = substream(14, 0, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| norm_of(&sample_uniform_ball(&spec, &mut rng), NormKind::Euclidean).powi(2))
            .collect();
        let ks = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn radial_law_all_norms_low_dim() {
        for (i, norm) in [NormKind::Euclidean, NormKind::Sup, NormKind::One]
            .into_iter()
            .enumerate()
        {
            for d in 1..=5 {
                let spec = ball(d, 2.5, norm);
                let mut rng = substream(20 + i as u64, d as u64, 0);
                let xs: Vec<f64> = (0..100_000)
                    .map(|_| {
                        let p = sample_uniform_ball(&spec, &mut rng);
                        let n = norm_of(&p, norm);
                        assert!(n <= 2.5);
                        (n / 2.5).powi(d as i32)
                    })
                    .collect();
                let ks = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
                assert!(ks.p_value > 0.01, "{norm} d={d}: {ks:?}");
            }
        }
    }

    #[test]
    fn wrong_radial_law_is_detectable() {
        let spec = ball(2, 1.0, NormKind::Euclidean);
        let mut rng = substream(15, 0, 0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| {
                norm_of(
                    &sample_wrong_radial_law(&spec, &mut rng),
                    NormKind::Euclidean,
                )
                .powi(2)
            })
            .collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn high_dimension_stays_in_ball() {
        let spec = ball(50, 1.0, NormKind::Euclidean);
        let mut rng = substream(16, 0, 0);
        for _ in 0..1000 {
            assert!(norm_of(&sample_uniform_ball(&spec, &mut rng), NormKind::Euclidean) <= 1.0);
        }
        assert!(log_ball_volume(&spec).is_finite());
    }

    fn any_norm() -> impl Strategy<Value = NormKind> {
        prop_oneof![
            Just(NormKind::Euclidean),
            Just(NormKind::Sup),
            Just(NormKind::One)
        ]
    }

    proptest! {
        #[test]
        fn norm_axioms(
            kind in any_norm(),
            (x, y) in (1usize..8).prop_flat_map(|d| (
                prop::collection::vec(-1e3..1e3f64, d),
                prop::collection::vec(-1e3..1e3f64, d),
            )),
            c in -50.0..50.0f64,
        ) {
            let nx = kind.eval(&x);
            let ny = kind.eval(&y);
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            prop_assert!(kind.eval(&sum) <= nx + ny + 1e-9 * (nx + ny + 1.0));
            let scaled: Vec<f64> = x.iter().map(|a| c * a).collect();
            prop_assert!((kind.eval(&scaled) - c.abs() * nx).abs() <= 1e-9 * (c.abs() * nx + 1.0));
        }

        #[test]
        fn samples_never_leave_the_ball(
            kind in any_norm(), d in 1usize..12, r in 1e-3..1e3f64, seed in any::<u64>(),
        ) {
            let spec = BallSpec::new(d, r, kind).unwrap();
            let mut rng = substream(seed, 0, 0);
            for _ in 0..64 {
                let p = sample_uniform_ball(&spec, &mut rng);
                prop_assert_eq!(p.dim(), d);
                prop_assert!(norm_of(&p, kind) <= r);
            }
        }
    }
}
