//! The sample-reuse chain.
//!
//! Levels are processed from the largest ball to the smallest. At each step
//! every parent record whose uncertainty sample lies inside the next ball is
//! carried over unchanged (V draw, delta and cached q value), in parent order,
//! and the remaining slots are filled with fresh records drawn in the smaller
//! ball. Since V is independent of delta and the selection depends on delta
//! alone, the carried pairs keep the product law, and the level's records are
//! again N i.i.d. uniform draws. Only fresh records cost a q evaluation.
//!
//! A level only needs its parent's records, so memory is O(N) in the number of
//! levels; earlier levels are reduced to [`LevelEstimate`] summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{GridSpec, LevelEstimate};
use crate::geometry::{norm_of, sample_uniform_ball, sample_wrong_radial_law, BallSpec, Point};
use crate::problem::{ProblemDef, Quantity};
use crate::rng::StreamRng;
use crate::stats::mean_stderr;

/// One paired draw and its cached evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord<V> {
    v_draw: V,
    delta: Point,
    delta_norm: f64,
    q_value: f64,
}

impl<V> ExperimentRecord<V> {
    pub fn new(v_draw: V, delta: Point, delta_norm: f64, q_value: f64) -> Self {
        ExperimentRecord {
            v_draw,
            delta,
            delta_norm,
            q_value,
        }
    }

    pub fn v_draw(&self) -> &V {
        &self.v_draw
    }

    pub fn delta(&self) -> &Point {
        &self.delta
    }

    pub fn delta_norm(&self) -> f64 {
        self.delta_norm
    }

    pub fn q_value(&self) -> f64 {
        self.q_value
    }
}

#[derive(Debug, Clone)]
pub struct ReuseOutcome<V> {
    /// Reused records first, in parent order, then the fresh ones.
    pub records: Vec<ExperimentRecord<V>>,
    pub reused_count: usize,
    pub fresh_count: usize,
    /// Parent positions of the reused records (strictly increasing).
    pub reused_from: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub radius: f64,
    pub reused: usize,
    pub fresh: usize,
}

/// Per-level reused/fresh counts of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub samples_per_level: usize,
    pub per_level: Vec<LevelTrace>,
}

impl ChainTrace {
    /// `N + sum_{l>=2} n_l`.
    pub fn total_fresh(&self) -> usize {
        self.samples_per_level + self.fresh_after_first()
    }

    /// `sum_{l>=2} n_l`, the quantity whose law is Poisson-dominated.
    pub fn fresh_after_first(&self) -> usize {
        self.per_level.iter().skip(1).map(|l| l.fresh).sum()
    }
}

pub fn total_fresh(trace: &ChainTrace) -> usize {
    trace.total_fresh()
}

/// Applies the reuse function once.
///
/// `fresh_source(i)` must return a new record uniform in the target ball; it
/// is called exactly `fresh_count` times with the slot index `i` of the
/// record it fills.
pub fn reuse_step<V, F>(
    parent: Vec<ExperimentRecord<V>>,
    parent_radius: f64,
    target_radius: f64,
    n: usize,
    fresh_source: F,
) -> Result<ReuseOutcome<V>>
where
    F: FnMut(usize) -> Result<ExperimentRecord<V>>,
{
    reuse_step_inner(parent, parent_radius, target_radius, n, fresh_source, true)
}

fn reuse_step_inner<V, F>(
    parent: Vec<ExperimentRecord<V>>,
    parent_radius: f64,
    target_radius: f64,
    n: usize,
    mut fresh_source: F,
    filter: bool,
) -> Result<ReuseOutcome<V>>
where
    F: FnMut(usize) -> Result<ExperimentRecord<V>>,
{
    if !(target_radius > 0.0 && target_radius < parent_radius) {
        return Err(Error::invalid(
            "target_radius",
            format!("must lie in (0, {parent_radius}), got {target_radius}"),
        ));
    }
    if parent.len() < n {
        return Err(Error::invalid(
            "parent",
            format!("has {} records, need {n}", parent.len()),
        ));
    }
    let mut records = Vec::with_capacity(n);
    let mut reused_from = Vec::new();
    for (i, rec) in parent.into_iter().enumerate() {
        if records.len() == n {
            break;
        }
        if !filter || rec.delta_norm <= target_radius {
            reused_from.push(i);
            records.push(rec);
        }
    }
    let reused_count = records.len();
    for slot in reused_count..n {
        records.push(fresh_source(slot)?);
    }
    Ok(ReuseOutcome {
        records,
        reused_count,
        fresh_count: n - reused_count,
        reused_from,
    })
}

/// View of one finished level, handed to chain observers.
#[derive(Debug)]
pub struct LevelView<'a, V> {
    /// Zero-based level index.
    pub level: usize,
    pub radius: f64,
    pub records: &'a [ExperimentRecord<V>],
    pub reused: usize,
}

impl<V> LevelView<'_, V> {
    pub fn fresh_records(&self) -> &[ExperimentRecord<V>] {
        &self.records[self.reused..]
    }
}

#[derive(Debug, Clone)]
pub struct ChainRun<V> {
    pub levels: Vec<LevelEstimate>,
    pub trace: ChainTrace,
    pub final_records: Vec<ExperimentRecord<V>>,
    /// Number of q evaluations actually performed.
    pub q_evaluations: u64,
}

/// Deliberate defects used to show the verification suites have teeth.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Reuse parent records without checking they lie in the smaller ball.
    UnfilteredReuse,
    /// Fresh samples use radius `rho * U^(1/(d+1))`.
    WrongRadialLaw,
    /// The trace reports one more fresh sample per level than was drawn.
    FreshCountOffByOne,
}

/// Runs the chain down `grid`, keeping per-level summaries.
pub fn run_chain<Q: Quantity>(
    problem: &ProblemDef<Q>,
    grid: &GridSpec,
    n: usize,
    rng: &mut StreamRng,
) -> Result<ChainRun<Q::Draw>> {
    run_chain_observed(problem, grid, n, rng, |_| {})
}

/// Like [`run_chain`], calling `observe` after each level is formed.
pub fn run_chain_observed<Q, F>(
    problem: &ProblemDef<Q>,
    grid: &GridSpec,
    n: usize,
    rng: &mut StreamRng,
    observe: F,
) -> Result<ChainRun<Q::Draw>>
where
    Q: Quantity,
    F: FnMut(&LevelView<'_, Q::Draw>),
{
    run_chain_with_fault(problem, grid, n, rng, Fault::None, observe)
}

pub(crate) fn run_chain_with_fault<Q, F>(
    problem: &ProblemDef<Q>,
    grid: &GridSpec,
    n: usize,
    rng: &mut StreamRng,
    fault: Fault,
    mut observe: F,
) -> Result<ChainRun<Q::Draw>>
where
    Q: Quantity,
    F: FnMut(&LevelView<'_, Q::Draw>),
{
    if n == 0 {
        return Err(Error::invalid(
            "samples",
            "need at least one sample per level",
        ));
    }
    let radii = grid.radii();
    if radii[0] > problem.max_radius() {
        return Err(Error::invalid(
            "grid",
            format!(
                "largest radius {} exceeds the problem's max radius {}",
                radii[0],
                problem.max_radius()
            ),
        ));
    }

    let mut q_evaluations = 0u64;
    let mut per_level = Vec::with_capacity(radii.len());
    let mut levels = Vec::with_capacity(radii.len());
    let mut current: Vec<ExperimentRecord<Q::Draw>> = Vec::new();

    for (level, &radius) in radii.iter().enumerate() {
        let ball = BallSpec::new(problem.dim(), radius, problem.norm())?;
        let mut fresh = |slot: usize| {
            q_evaluations += 1;
            fresh_record(problem, &ball, rng, fault, level, slot)
        };
        let (records, reused) = if level == 0 {
            let recs = (0..n).map(&mut fresh).collect::<Result<Vec<_>>>()?;
            (recs, 0)
        } else {
            let parent = std::mem::take(&mut current);
            let out = reuse_step_inner(
                parent,
                radii[level - 1],
                radius,
                n,
                &mut fresh,
                fault != Fault::UnfilteredReuse,
            )?;
            (out.records, out.reused_count)
        };
        let fresh = n - reused;
        let reported_fresh = if fault == Fault::FreshCountOffByOne && level > 0 {
            fresh + 1
        } else {
            fresh
        };
        per_level.push(LevelTrace {
            radius,
            reused,
            fresh: reported_fresh,
        });
        let qs: Vec<f64> = records.iter().map(|r| r.q_value).collect();
        let (mean, stderr) = mean_stderr(&qs);
        levels.push(LevelEstimate {
            radius,
            mean,
            stderr,
            reused,
            fresh_count: fresh,
        });
        observe(&LevelView {
            level,
            radius,
            records: &records,
            reused,
        });
        current = records;
    }

    Ok(ChainRun {
        levels,
        trace: ChainTrace {
            samples_per_level: n,
            per_level,
        },
        final_records: current,
        q_evaluations,
    })
}

pub(crate) fn fresh_record<Q: Quantity>(
    problem: &ProblemDef<Q>,
    ball: &BallSpec,
    rng: &mut StreamRng,
    fault: Fault,
    level: usize,
    index: usize,
) -> Result<ExperimentRecord<Q::Draw>> {
    let delta = if fault == Fault::WrongRadialLaw {
        sample_wrong_radial_law(ball, rng)
    } else {
        sample_uniform_ball(ball, rng)
    };
    let v = problem.quantity().sample_v(rng);
    let q = problem.quantity().eval(&v, &delta);
    if !q.is_finite() {
        return Err(Error::NonFiniteQ {
            level,
            index,
            value: q,
        });
    }
    let delta_norm = norm_of(&delta, problem.norm());
    Ok(ExperimentRecord::new(v, delta, delta_norm, q))
}
