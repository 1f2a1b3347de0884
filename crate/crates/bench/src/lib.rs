//! Fixtures shared by the benchmarks.

use nestball_core::{build_grid, BuiltinProblem, GridScheme, GridSpec, NormKind, ProblemDef};

pub fn quadratic_problem(dim: usize) -> ProblemDef<BuiltinProblem> {
    ProblemDef::new(
        dim,
        NormKind::Euclidean,
        1.0,
        BuiltinProblem::QuadraticShift,
    )
    .expect("valid problem")
}

pub fn geometric_grid(levels: usize, min_radius: f64) -> GridSpec {
    build_grid(1.0, levels, GridScheme::GeometricInVolume, Some(min_radius)).expect("valid grid")
}

/// `levels - 1` equal volume ratios whose logs sum to `-log_span`.
pub fn equal_ratios(levels: usize, log_span: f64) -> Vec<f64> {
    vec![(-log_span / (levels - 1) as f64).exp(); levels - 1]
}
