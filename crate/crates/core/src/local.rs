//! Per-agent relaxed subproblem
//!
//! ```text
//!   p_i(y_i) = min  f_i(x) + Mρ
//!              s.t. g_i(x) ≤ y_i + ρ1,  ρ ≥ 0,  x ∈ X_i
//! ```
//!
//! It is feasible for every allocation `y_i`. The multipliers `μ_i` of the
//! coupling rows give the subgradient `−μ_i` of `p_i` at `y_i`, and the
//! stationarity condition in `ρ` forces `‖μ_i‖₁ ≤ M`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpsolve::{LpBuilder, LpError, LpSolver, StandardLp};
use crate::model::AgentModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("penalty M must be positive and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("allocation has length {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("local solve failed: {0}")]
    Solver(#[from] LpError),
}

/// Resource allocation `y_i` of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(pub Vec<f64>);

impl AsRef<[f64]> for Allocation {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Primal-dual solution of the local subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub x: Vec<f64>,
    pub rho: f64,
    /// Multipliers of `g_i(x) − ρ1 ≤ y_i`.
    pub mu: Vec<f64>,
    /// `f_i(x) + Mρ`
    pub p_value: f64,
    pub kkt_residual: f64,
}

impl LocalSolution {
    pub fn mu_l1(&self) -> f64 {
        self.mu.iter().map(|m| m.abs()).sum()
    }
}

/// The local LP of one agent for a fixed `M`, assembled once and re-solved
/// for each allocation by swapping the coupling right-hand side.
#[derive(Debug, Clone)]
pub struct LocalSubproblem {
    lp: StandardLp,
    x: Range<usize>,
    rho: usize,
    coupling_rows: Range<usize>,
    penalty: f64,
}

impl LocalSubproblem {
    pub fn new(agent: &AgentModel, penalty: f64) -> Result<Self, LocalError> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(LocalError::InvalidPenalty(penalty));
        }
        let mut lp = LpBuilder::new();
        let cols = agent.add_to_lp(&mut lp);
        let rho = lp.add_vars(1, penalty).start;
        let first = lp.num_rows();
        for (row, b) in agent.coupling_matrix().iter().zip(agent.coupling_offset()) {
            let coeffs = row.iter().enumerate().map(|(k, v)| (cols.x.start + k, *v));
            lp.add_row(coeffs.chain([(rho, -1.0)]), *b);
        }
        let coupling_rows = first..lp.num_rows();
        lp.add_row([(rho, -1.0)], 0.0);
        Ok(Self {
            lp: lp.build()?,
            x: cols.x,
            rho,
            coupling_rows,
            penalty,
        })
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn s_dim(&self) -> usize {
        self.coupling_rows.len()
    }

    /// The assembled LP with the coupling right-hand side set to `b`.
    pub fn lp(&self) -> &StandardLp {
        &self.lp
    }

    /// Right-hand side of the LP for allocation `y`.
    pub fn rhs(&self, y: &[f64]) -> Result<Vec<f64>, LocalError> {
        if y.len() != self.s_dim() {
            return Err(LocalError::Dimension {
                got: y.len(),
                expected: self.s_dim(),
            });
        }
        let mut h = self.lp.h().to_vec();
        for (r, yi) in self.coupling_rows.clone().zip(y) {
            h[r] += yi;
        }
        Ok(h)
    }

    pub fn solve(&self, y: &[f64], solver: &LpSolver) -> Result<LocalSolution, LocalError> {
        let h = self.rhs(y)?;
        let sol = solver.solve_with_rhs(&self.lp, &h)?.into_optimal()?;
        Ok(LocalSolution {
            x: sol.x[self.x.clone()].to_vec(),
            rho: sol.x[self.rho],
            mu: sol.lambda[self.coupling_rows.clone()].to_vec(),
            p_value: sol.objective,
            kkt_residual: sol.kkt_residual,
        })
    }
}

/// One-shot form of [`LocalSubproblem::solve`].
pub fn solve_local(
    agent: &AgentModel,
    y: &Allocation,
    penalty: f64,
    solver: &LpSolver,
) -> Result<LocalSolution, LocalError> {
    LocalSubproblem::new(agent, penalty)?.solve(&y.0, solver)
}

/// `−μ_i`, a subgradient of `p_i` at the allocation `sol` was computed for.
pub fn p_subgradient(sol: &LocalSolution) -> Vec<f64> {
    sol.mu.iter().map(|m| -m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::box_rows;

    /// `f(x) = x` on `[0, 1]`, `g(x) = −x`.
    fn one_dim() -> AgentModel {
        let (g, h) = box_rows(&[0.0], &[1.0]);
        AgentModel::new(vec![1.0], vec![], vec![vec![-1.0]], vec![0.0], g, h).unwrap()
    }

    #[test]
    fn forced_allocation() {
        let s = solve_local(&one_dim(), &Allocation(vec![-0.5]), 10.0, &LpSolver::default()).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-8);
        assert!(s.rho.abs() < 1e-8);
        assert!((s.p_value - 0.5).abs() < 1e-8);
        assert!((s.mu[0] - 1.0).abs() < 1e-7);
        assert!((p_subgradient(&s)[0] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn slack_allocation_is_free() {
        let s = solve_local(&one_dim(), &Allocation(vec![5.0]), 10.0, &LpSolver::default()).unwrap();
        assert!(s.x[0].abs() < 1e-8);
        assert!(s.rho.abs() < 1e-8);
        assert!(s.mu[0].abs() < 1e-8);
        assert!(p_subgradient(&s)[0].abs() < 1e-8);
    }

    #[test]
    fn infeasible_allocation_uses_rho() {
        // x ≥ 2 is impossible on [0, 1]; ρ = 1 closes the gap at x = 1.
        let s = solve_local(&one_dim(), &Allocation(vec![-2.0]), 10.0, &LpSolver::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-7);
        assert!((s.rho - 1.0).abs() < 1e-7);
        assert!((s.p_value - 11.0).abs() < 1e-6);
        assert!((s.mu_l1() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            LocalSubproblem::new(&one_dim(), 0.0).unwrap_err(),
            LocalError::InvalidPenalty(0.0)
        );
        let p = LocalSubproblem::new(&one_dim(), 1.0).unwrap();
        assert!(matches!(
            p.solve(&[0.0, 0.0], &LpSolver::default()),
            Err(LocalError::Dimension { got: 2, expected: 1 })
        ));
    }
}
