//! Problem definitions: the quantity `q(V, delta)` and the uncertainty ball.
//!
//! The uncertainty is assumed bounded in norm by `max_radius`, with a density
//! that depends only on the norm and does not increase with it. Those are
//! preconditions on the caller's model; nothing here evaluates that density.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NormKind, Point};
use crate::rng::StreamRng;

/// A quantity whose mean is being bounded.
///
/// `eval` must be deterministic given its inputs: the reuse chain evaluates
/// each `(V, delta)` pair once and carries the cached result to smaller balls.
pub trait Quantity: Sync {
    /// One draw of the known-distribution input `V`.
    type Draw: Clone + Send + Sync + fmt::Debug;

    fn sample_v(&self, rng: &mut StreamRng) -> Self::Draw;

    fn eval(&self, v: &Self::Draw, delta: &Point) -> f64;
}

/// The analytic test problems selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinProblem {
    /// `q = 0`.
    Zero,
    /// `q = delta_1`; every `M(rho)` is zero by symmetry.
    OddSymmetric,
    /// `q = v + ||delta||_2^2` with `v ~ N(0, 1)`.
    QuadraticShift,
}

impl BuiltinProblem {
    pub const ALL: [BuiltinProblem; 3] = [
        BuiltinProblem::Zero,
        BuiltinProblem::OddSymmetric,
        BuiltinProblem::QuadraticShift,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BuiltinProblem::Zero => "zero",
            BuiltinProblem::OddSymmetric => "odd-symmetric",
            BuiltinProblem::QuadraticShift => "quadratic-shift",
        }
    }

    /// `M(rho)` in closed form, where one is available.
    pub fn exact_mean(self, dim: usize, norm: NormKind, rho: f64) -> Option<f64> {
        let d = dim as f64;
        match (self, norm) {
            (BuiltinProblem::Zero, _) | (BuiltinProblem::OddSymmetric, _) => Some(0.0),
            // E||x||^2 = d/(d+2) rho^2 for x uniform in the euclidean ball
            (BuiltinProblem::QuadraticShift, NormKind::Euclidean) => {
                Some(d / (d + 2.0) * rho * rho)
            }
            // independent U(-rho, rho) coordinates
            (BuiltinProblem::QuadraticShift, NormKind::Sup) => Some(d * rho * rho / 3.0),
            (BuiltinProblem::QuadraticShift, NormKind::One) => None,
        }
    }
}

impl fmt::Display for BuiltinProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BuiltinProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinProblem::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "problem",
                    format!(
                        "unknown problem `{s}` (expected zero, odd-symmetric or quadratic-shift)"
                    ),
                )
            })
    }
}

impl Quantity for BuiltinProblem {
    type Draw = f64;

    fn sample_v(&self, rng: &mut StreamRng) -> f64 {
        match self {
            BuiltinProblem::QuadraticShift => rng.sample(StandardNormal),
            _ => 0.0,
        }
    }

    fn eval(&self, v: &f64, delta: &Point) -> f64 {
        match self {
            BuiltinProblem::Zero => 0.0,
            BuiltinProblem::OddSymmetric => delta.coords()[0],
            BuiltinProblem::QuadraticShift => v + delta.coords().iter().map(|x| x * x).sum::<f64>(),
        }
    }
}

/// Adapts a pair of closures into a [`Quantity`].
pub struct FnQuantity<S, F> {
    sampler: S,
    eval: F,
}

impl<S, F> FnQuantity<S, F> {
    pub fn new(sampler: S, eval: F) -> Self {
        FnQuantity { sampler, eval }
    }
}

impl<V, S, F> Quantity for FnQuantity<S, F>
where
    V: Clone + Send + Sync + fmt::Debug,
    S: Fn(&mut StreamRng) -> V + Sync,
    F: Fn(&V, &Point) -> f64 + Sync,
{
    type Draw = V;

    fn sample_v(&self, rng: &mut StreamRng) -> V {
        (self.sampler)(rng)
    }

    fn eval(&self, v: &V, delta: &Point) -> f64 {
        (self.eval)(v, delta)
    }
}

#[derive(Debug, Clone)]
pub struct ProblemDef<Q> {
    dim: usize,
    norm: NormKind,
    max_radius: f64,
    quantity: Q,
}

impl<Q: Quantity> ProblemDef<Q> {
    pub fn new(dim: usize, norm: NormKind, max_radius: f64, quantity: Q) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(max_radius > 0.0 && max_radius.is_finite()) {
            return Err(Error::invalid(
                "max_radius",
                format!("must be positive and finite, got {max_radius}"),
            ));
        }
        Ok(ProblemDef {
            dim,
            norm,
            max_radius,
            quantity,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    pub fn quantity(&self) -> &Q {
        &self.quantity
    }
}
