//! Five agents with L1 costs, box local sets and coupling `Σ_i i·x_i ≤ 0`.

use rand::Rng;

use crate::dpd::{InitPreset, StepSchedule};
use crate::graph::{EdgeProcess, UnderlyingGraph};
use crate::model::{box_rows, AgentModel, CoupledProblem};

use super::{instance_rng, Experiment};

pub const N: usize = 5;
pub const S: usize = 3;
pub const BOX: f64 = 10.0;
/// Range of the L1 reference entries.
pub const TARGET_RANGE: (f64, f64) = (15.0, 20.0);

/// Edges (0-based) and activation probabilities of the fixed graph.
pub const EDGES: [(usize, usize, f64); 4] = [(0, 3, 0.5), (0, 4, 0.6), (1, 2, 0.4), (1, 4, 0.7)];

pub fn graph() -> UnderlyingGraph {
    let pairs: Vec<(usize, usize)> = EDGES.iter().map(|&(i, j, _)| (i, j)).collect();
    UnderlyingGraph::new(N, &pairs).expect("fixed graph is valid")
}

/// The instance for `seed`: references drawn from the instance stream,
/// activations from the per-edge streams of the same seed.
pub fn gen_basic(seed: u64) -> Experiment {
    let mut rng = instance_rng(seed);
    let agents = (1..=N)
        .map(|i| {
            let r: Vec<f64> = (0..S)
                .map(|_| rng.gen_range(TARGET_RANGE.0..=TARGET_RANGE.1))
                .collect();
            let (g, h) = box_rows(&[-BOX; S], &[BOX; S]);
            let mut a = vec![vec![0.0; S]; S];
            for (k, row) in a.iter_mut().enumerate() {
                row[k] = i as f64;
            }
            AgentModel::new(vec![0.0; S], vec![r], a, vec![0.0; S], g, h)
                .expect("generated agent is valid")
        })
        .collect();
    let problem = CoupledProblem::new(agents).expect("agents share S");
    let process = EdgeProcess::new(graph(), EDGES.iter().map(|e| e.2).collect(), seed)
        .expect("fixed probabilities are valid");
    Experiment {
        problem,
        process,
        slater: vec![vec![-BOX; S]; N],
        penalty: 6.0,
        schedule: StepSchedule::Power { k: 1.0, p: 0.6 },
        init: InitPreset::Zero,
        seed,
        generator: "basic".into(),
        parameters: serde_json::json!({
            "n": N,
            "s": S,
            "box": BOX,
            "target_range": [TARGET_RANGE.0, TARGET_RANGE.1],
        }),
    }
}
