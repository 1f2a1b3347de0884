//! Robust mean bounds by nested-ball Monte Carlo with sample reuse.
//!
//! For a quantity `Q = q(V, Delta)` where `Delta` is only known to be bounded
//! in norm by `r` with a radially nonincreasing density, `E[Q]` lies between
//! the infimum and supremum over `rho` of `M(rho) = E[q(V, U_rho)]`, `U_rho`
//! uniform in the ball of radius `rho`. [`estimate_levels`] sweeps a grid of
//! radii from large to small, carrying over every sample that still lies in
//! the next ball, so the number of `q` evaluations grows with the log of the
//! volume span rather than with the number of grid points.
//! [`exact_fresh_dist`] gives the exact law of that count.

pub mod complexity;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod problem;
pub mod report;
pub mod reuse;
pub mod rng;
pub mod stats;
pub mod verify;

pub use complexity::{
    binomial_cdf_l, chernoff_tail, density_empirical, density_theoretical, exact_fresh_dist,
    exact_fresh_dist_equal, expected_fresh_upper, poisson_cdf_lp, poisson_lambda, relative_tail,
    relative_tail_sharp, DensityConfig, DensityFlag, DensityParams, DensityProfile, FreshCountDist,
    PoissonRef,
};
pub use error::{Error, Result};
pub use estimator::{
    bounds, build_grid, estimate_levels, estimate_naive, BoundsReport, GridScheme, GridSpec,
    LevelEstimate, LevelSweep,
};
pub use geometry::{
    ball_volume, log_ball_volume, norm_of, sample_uniform_ball, BallSpec, NormKind, Point,
};
pub use problem::{BuiltinProblem, FnQuantity, ProblemDef, Quantity};
pub use report::{DensityRow, PmfRow, ReportBundle};
pub use reuse::{
    reuse_step, run_chain, run_chain_observed, total_fresh, ChainRun, ChainTrace, ExperimentRecord,
    ReuseOutcome,
};
pub use rng::{substream, StreamRng};
pub use verify::{run_suite, Check, Suite, TestConfig, TestReport};
