//! Sublinear rate bounds of the block method.
//!
//! With `R² = ‖z⁰ − z*‖_W²` and `C = Σ_ℓ C_ℓ²/σ_ℓ`:
//!
//! ```text
//!   constant α:       f_best^t − f* ≤ R² / (2α(t+1)) + Cα/2
//!   α^t = K/(t+1):    f_best^t − f* ≤ (R² + CK²) / (2K log(t+2))
//! ```
//!
//! The optimum `z*` is not known in closed form. It is replaced by a proxy,
//! the final iterate of a long harmonic-step block run, and reports carry
//! a description of where the proxy came from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocksub::{BlockError, BlockMethod, BlockVector, SubgradientBound, WeightedNorm};
use crate::dpd::{DpdConfig, StepSchedule};
use crate::graph::{EdgeActivation, UnderlyingGraph};
use crate::model::CoupledProblem;
use crate::trace::RoundTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("no rate bound for schedule {0}; use const:a or harm:K")]
    ScheduleUnsupported(StepSchedule),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Stand-in for an optimal `z*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStarProxy {
    pub z: BlockVector,
    pub provenance: String,
}

/// Runs the block method for `rounds` rounds from `z0` with
/// `config.schedule` and keeps the final iterate.
pub fn z_star_proxy(
    problem: &CoupledProblem,
    graph: &UnderlyingGraph,
    activation: &dyn EdgeActivation,
    config: DpdConfig,
    z0: BlockVector,
    rounds: u64,
    label: &str,
) -> Result<ZStarProxy, BlockError> {
    let mut run = BlockMethod::new(problem, graph, activation, config, z0)?;
    for _ in 0..rounds {
        run.run_round()?;
    }
    Ok(ZStarProxy {
        z: run.state().z.clone(),
        provenance: format!("final iterate of {rounds} block-method rounds, {}, {label}", config.schedule),
    })
}

pub fn bound_constant(dist_sq: f64, c: f64, alpha: f64, t: u64) -> f64 {
    dist_sq / (2.0 * alpha * (t as f64 + 1.0)) + c * alpha / 2.0
}

pub fn bound_dimin(dist_sq: f64, c: f64, k: f64, t: u64) -> f64 {
    (dist_sq + c * k * k) / (2.0 * k * (t as f64 + 2.0).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub schedule: StepSchedule,
    pub f_star: f64,
    /// `‖z⁰ − z*‖_W²` with the proxy in place of `z*`.
    pub dist_sq: f64,
    /// `Σ_ℓ C_ℓ²/σ_ℓ`
    pub c: f64,
    pub slack: f64,
    pub proxy: String,
    pub t: Vec<u64>,
    pub f_best: Vec<f64>,
    pub bound: Vec<f64>,
    /// Rounds with `f_best − f* > bound + slack`.
    pub violations: Vec<u64>,
}

impl RateReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest `f_best − f* − bound` over the trace.
    pub fn max_excess(&self) -> f64 {
        self.f_best
            .iter()
            .zip(&self.bound)
            .map(|(f, b)| f - self.f_star - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn rate_bounds(
    trace: &[RoundTrace],
    f_star: f64,
    schedule: StepSchedule,
    z0: &BlockVector,
    proxy: &ZStarProxy,
    norm: &WeightedNorm,
    bound: &SubgradientBound,
    slack: f64,
) -> Result<RateReport, RateError> {
    let curve: Box<dyn Fn(f64, f64, u64) -> f64> = match schedule {
        StepSchedule::Constant(a) => Box::new(move |d, c, t| bound_constant(d, c, a, t)),
        StepSchedule::Harmonic(k) => Box::new(move |d, c, t| bound_dimin(d, c, k, t)),
        other => return Err(RateError::ScheduleUnsupported(other)),
    };
    if z0.num_blocks() != proxy.z.num_blocks() || z0.s_dim() != proxy.z.s_dim() {
        return Err(RateError::Dimension("z0 and the proxy have different shapes".into()));
    }
    if norm.sigma().len() != z0.num_blocks() {
        return Err(RateError::Dimension(format!(
            "{} probabilities for {} blocks",
            norm.sigma().len(),
            z0.num_blocks()
        )));
    }
    let dist_sq = norm.norm_sq(&z0.sub(&proxy.z));
    let c = bound.aggregate();
    let mut report = RateReport {
        schedule,
        f_star,
        dist_sq,
        c,
        slack,
        proxy: proxy.provenance.clone(),
        t: Vec::with_capacity(trace.len()),
        f_best: Vec::with_capacity(trace.len()),
        bound: Vec::with_capacity(trace.len()),
        violations: vec![],
    };
    let mut f_best = f64::INFINITY;
    for row in trace {
        f_best = f_best.min(row.cost);
        let b = curve(dist_sq, c, row.t);
        if f_best - f_star > b + slack {
            report.violations.push(row.t);
        }
        report.t.push(row.t);
        report.f_best.push(f_best);
        report.bound.push(b);
    }
    Ok(report)
}
