//! Experiment generators, run metrics and rate bounds.

pub mod basic;
pub mod metrics;
pub mod pev;
pub mod rates;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpd::{InitPreset, StepSchedule};
use crate::graph::{EdgeProcess, GraphError};
use crate::model::{CoupledProblem, ModelError};

pub use basic::gen_basic;
pub use metrics::{metrics, MetricRow};
pub use pev::{gen_pev, gen_pev_with, PevParams};
pub use rates::{rate_bounds, RateError, RateReport, ZStarProxy};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Stream of a seed reserved for instance data; edge activations use the
/// streams numbered by edge id.
const INSTANCE_STREAM: u64 = u64::MAX;

pub(crate) fn instance_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INSTANCE_STREAM);
    rng
}

/// A generated instance with its graph, Slater point and recommended
/// algorithm settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Experiment {
    pub problem: CoupledProblem,
    pub process: EdgeProcess,
    pub slater: Vec<Vec<f64>>,
    pub penalty: f64,
    pub schedule: StepSchedule,
    pub init: InitPreset,
    pub seed: u64,
    pub generator: String,
    /// Generator ranges and constants, echoed for reproducibility.
    pub parameters: serde_json::Value,
}
