//! Edge-variable reformulation and the randomized block subgradient method.
//!
//! Every undirected edge `ℓ = (i, j)`, `i < j`, owns a block
//! `z_ℓ = (z_(ij), z_(ji))` of dimension `2S`. The allocations are recovered
//! as `y = Πz` with `Π = Γᵀ ⊗ I_S`, where `Γ` is the directed incidence
//! matrix, so agent `i` receives `Σ_j (z_(ij) − z_(ji))`. Any `z` therefore
//! yields allocations that sum to zero, and every zero-sum `y` has a
//! preimage.

mod method;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpd::DpdError;
use crate::graph::UnderlyingGraph;
use crate::local::{LocalError, LocalSolution, LocalSubproblem};
use crate::lpsolve::LpSolver;
use crate::model::CoupledProblem;

pub use method::{BlockMethod, BlockState, PairedRun};

/// Allocations passed to [`lift`] must sum to zero within this tolerance.
pub const LIFT_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("allocations sum to {0:e}, expected zero")]
    NonZeroSum(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("edge {edge} has probability {sigma}, expected (0, 1]")]
    InvalidProbability { edge: usize, sigma: f64 },
    #[error("agent {agent}: {source}")]
    Local { agent: usize, source: LocalError },
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("primal decomposition side of a paired run: {0}")]
    Dpd(#[from] DpdError),
    #[error("writing trace: {0}")]
    Sink(#[from] std::io::Error),
}

/// Edge variables, stored flat in the graph's edge order. Block `ℓ` holds
/// `z_(ij)` followed by `z_(ji)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVector {
    s_dim: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(num_blocks: usize, s_dim: usize) -> Self {
        Self {
            s_dim,
            data: vec![0.0; 2 * s_dim * num_blocks],
        }
    }

    pub fn from_flat(num_blocks: usize, s_dim: usize, data: Vec<f64>) -> Result<Self, BlockError> {
        if data.len() != 2 * s_dim * num_blocks {
            return Err(BlockError::Dimension(format!(
                "{} entries for {num_blocks} blocks of size {}",
                data.len(),
                2 * s_dim
            )));
        }
        Ok(Self { s_dim, data })
    }

    pub fn num_blocks(&self) -> usize {
        if self.s_dim == 0 {
            0
        } else {
            self.data.len() / (2 * self.s_dim)
        }
    }

    pub fn s_dim(&self) -> usize {
        self.s_dim
    }

    pub fn block(&self, l: usize) -> &[f64] {
        &self.data[2 * self.s_dim * l..2 * self.s_dim * (l + 1)]
    }

    pub fn block_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[2 * self.s_dim * l..2 * self.s_dim * (l + 1)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self − other`
    pub fn sub(&self, other: &BlockVector) -> BlockVector {
        BlockVector {
            s_dim: self.s_dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// `‖θ‖_W² = Σ_ℓ ‖θ_ℓ‖² / σ_ℓ`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    sigma: Vec<f64>,
}

impl WeightedNorm {
    pub fn new(sigma: Vec<f64>) -> Result<Self, BlockError> {
        if let Some((edge, &sigma)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0 && **s <= 1.0)) {
            return Err(BlockError::InvalidProbability { edge, sigma });
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn norm_sq(&self, theta: &BlockVector) -> f64 {
        self.sigma
            .iter()
            .enumerate()
            .map(|(l, s)| theta.block(l).iter().map(|v| v * v).sum::<f64>() / s)
            .sum()
    }

    /// The diagonal matrix `W` with `‖θ‖_W² = θᵀWθ`.
    pub fn matrix(&self, s_dim: usize) -> DMatrix<f64> {
        let d = self.sigma.iter().flat_map(|s| std::iter::repeat_n(1.0 / s, 2 * s_dim));
        DMatrix::from_diagonal(&DVector::from_iterator(2 * s_dim * self.sigma.len(), d))
    }
}

/// Block-wise subgradient bounds `C_ℓ` with the aggregate
/// `C = Σ_ℓ C_ℓ² / σ_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientBound {
    pub per_block: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl SubgradientBound {
    /// `C_ℓ = 2√S·M`, valid because every multiplier has `‖μ‖₁ ≤ M`.
    pub fn from_penalty(s_dim: usize, penalty: f64, sigma: &[f64]) -> Self {
        let c = 2.0 * (s_dim as f64).sqrt() * penalty;
        Self {
            per_block: vec![c; sigma.len()],
            sigma: sigma.to_vec(),
        }
    }

    pub fn aggregate(&self) -> f64 {
        self.per_block.iter().zip(&self.sigma).map(|(c, s)| c * c / s).sum()
    }
}

/// `Π = Γᵀ ⊗ I_S` as a dense `NS × 2BS` matrix.
pub fn pi_matrix(graph: &UnderlyingGraph, s_dim: usize) -> DMatrix<f64> {
    let gamma = graph.directed_incidence_matrix();
    let mut pi = DMatrix::zeros(graph.n_agents() * s_dim, gamma.nrows() * s_dim);
    for r in 0..gamma.nrows() {
        for i in 0..graph.n_agents() {
            let g = gamma[(r, i)];
            if g != 0 {
                for s in 0..s_dim {
                    pi[(i * s_dim + s, r * s_dim + s)] = g as f64;
                }
            }
        }
    }
    pi
}

/// `y = Πz`, one allocation per agent.
pub fn project_down(z: &BlockVector, graph: &UnderlyingGraph) -> Vec<Vec<f64>> {
    let s_dim = z.s_dim();
    let mut y = vec![vec![0.0; s_dim]; graph.n_agents()];
    for (l, &(i, j)) in graph.edges().iter().enumerate() {
        let (zij, zji) = z.block(l).split_at(s_dim);
        for s in 0..s_dim {
            let d = zij[s] - zji[s];
            y[i][s] += d;
            y[j][s] -= d;
        }
    }
    y
}

/// The minimum-norm `z` with `Πz = y`.
pub fn lift(y: &[Vec<f64>], graph: &UnderlyingGraph) -> Result<BlockVector, BlockError> {
    let n = graph.n_agents();
    if y.len() != n {
        return Err(BlockError::Dimension(format!("{} allocations for {n} agents", y.len())));
    }
    let s_dim = y[0].len();
    if y.iter().any(|v| v.len() != s_dim) {
        return Err(BlockError::Dimension("allocations of unequal length".into()));
    }
    let mut worst = 0.0f64;
    for s in 0..s_dim {
        let sum: f64 = y.iter().map(|v| v[s]).sum();
        if sum.abs() > worst.abs() {
            worst = sum;
        }
    }
    if worst.abs() > LIFT_SUM_TOL {
        return Err(BlockError::NonZeroSum(worst));
    }

    // z = Γ L⁺ y with L = ΓᵀΓ. On a connected graph L + 11ᵀ/N is positive
    // definite and agrees with L⁺ on zero-sum vectors.
    let gamma = graph.directed_incidence_matrix().map(|v| v as f64);
    let l = gamma.transpose() * &gamma + DMatrix::from_element(n, n, 1.0 / n as f64);
    let chol = l.cholesky().expect("Laplacian of a connected graph plus 11ᵀ/N is positive definite");
    let mut z = BlockVector::zeros(graph.num_edges(), s_dim);
    for s in 0..s_dim {
        let v = chol.solve(&DVector::from_iterator(n, y.iter().map(|yi| yi[s])));
        let zs = &gamma * v;
        for l in 0..graph.num_edges() {
            let block = z.block_mut(l);
            block[s] = zs[2 * l];
            block[s_dim + s] = zs[2 * l + 1];
        }
    }
    Ok(z)
}

/// Local subproblems of every agent for penalty `M`.
pub fn local_subproblems(problem: &CoupledProblem, penalty: f64) -> Result<Vec<LocalSubproblem>, BlockError> {
    problem
        .agents()
        .iter()
        .enumerate()
        .map(|(agent, a)| LocalSubproblem::new(a, penalty).map_err(|source| BlockError::Local { agent, source }))
        .collect()
}

/// Subgradient of `p̃(z) = Σ_i p_i([Πz]_i)`: the block of edge `(i, j)` is
/// `(μ_j − μ_i, μ_i − μ_j)`. Also returns the local solutions it came from.
pub fn block_subgradient(
    z: &BlockVector,
    graph: &UnderlyingGraph,
    subs: &[LocalSubproblem],
    solver: &LpSolver,
) -> Result<(BlockVector, Vec<LocalSolution>), BlockError> {
    let y = project_down(z, graph);
    let sols = crate::dpd::solve_all(None, subs, &y, solver)
        .map_err(|(agent, source)| BlockError::Local { agent, source })?;
    Ok((edge_differences(graph, &sols, z.s_dim()), sols))
}

pub(crate) fn edge_differences(graph: &UnderlyingGraph, sols: &[LocalSolution], s_dim: usize) -> BlockVector {
    let mut g = BlockVector::zeros(graph.num_edges(), s_dim);
    for (l, &(i, j)) in graph.edges().iter().enumerate() {
        let block = g.block_mut(l);
        for s in 0..s_dim {
            block[s] = sols[j].mu[s] - sols[i].mu[s];
            block[s_dim + s] = sols[i].mu[s] - sols[j].mu[s];
        }
    }
    g
}

/// `p̃(z) = Σ_i p_i([Πz]_i)`
pub fn p_tilde(
    z: &BlockVector,
    graph: &UnderlyingGraph,
    subs: &[LocalSubproblem],
    solver: &LpSolver,
) -> Result<f64, BlockError> {
    let y = project_down(z, graph);
    let sols = crate::dpd::solve_all(None, subs, &y, solver)
        .map_err(|(agent, source)| BlockError::Local { agent, source })?;
    Ok(sols.iter().map(|s| s.p_value).sum())
}
