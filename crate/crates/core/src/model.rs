//! Constraint-coupled problems
//!
//! ```text
//!   min  Σ f_i(x_i)   s.t.  Σ g_i(x_i) ≤ 0,  x_i ∈ X_i
//! ```
//!
//! with `f_i(x) = cᵀx + Σ_r ‖x − r‖₁`, `g_i(x) = A x − b` and
//! `X_i = {x : G x ≤ h}` a bounded polyhedron.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lpsolve::{kkt_check, LpBuilder, LpError, LpSolver};

/// Current instance schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("problem has no agents")]
    NoAgents,
    #[error("non-finite entry in agent {0}")]
    NonFinite(usize),
    #[error("Slater point of agent {0} is outside its local set")]
    NotInLocalSet(usize),
    #[error("Slater point is not strictly feasible in coupling component {0}")]
    NotStrictlyFeasible(usize),
    #[error("local set of agent {agent} is empty or unbounded: {source}")]
    BadLocalSet { agent: usize, source: LpError },
    #[error("minimizing the cost of agent {agent} failed: {source}")]
    LocalMinFailed { agent: usize, source: LpError },
    #[error("centralized solve failed: {0}")]
    SolverFailure(LpError),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
}

/// One agent's cost, coupling map and local polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AgentFile", into = "AgentFile")]
pub struct AgentModel {
    c: Vec<f64>,
    l1_terms: Vec<Vec<f64>>,
    /// `S × n`, row-major rows.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AgentFile {
    c: Vec<f64>,
    #[serde(default)]
    l1_terms: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl From<AgentModel> for AgentFile {
    fn from(m: AgentModel) -> Self {
        Self {
            c: m.c,
            l1_terms: m.l1_terms,
            a: m.a,
            b: m.b,
            g: m.g,
            h: m.h,
        }
    }
}

impl TryFrom<AgentFile> for AgentModel {
    type Error = ModelError;

    fn try_from(f: AgentFile) -> Result<Self, Self::Error> {
        AgentModel::new(f.c, f.l1_terms, f.a, f.b, f.g, f.h)
    }
}

/// Rows `x_k ≤ hi_k` and `−x_k ≤ −lo_k`.
pub fn box_rows(lo: &[f64], hi: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = lo.len();
    let mut g = Vec::with_capacity(2 * n);
    let mut h = Vec::with_capacity(2 * n);
    for k in 0..n {
        let mut up = vec![0.0; n];
        up[k] = 1.0;
        g.push(up);
        h.push(hi[k]);
        let mut down = vec![0.0; n];
        down[k] = -1.0;
        g.push(down);
        h.push(-lo[k]);
    }
    (g, h)
}

/// Variable layout of an agent inside an LP.
#[derive(Debug, Clone)]
pub struct AgentColumns {
    pub x: Range<usize>,
    /// One epigraph variable per L1 coordinate, term-major.
    pub aux: Range<usize>,
}

impl AgentModel {
    pub fn new(
        c: Vec<f64>,
        l1_terms: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        g: Vec<Vec<f64>>,
        h: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = c.len();
        let dim = |what: &str, got: usize, want: usize| -> Result<(), ModelError> {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::Dimension(format!("{what} has length {got}, expected {want}")))
            }
        };
        for r in &l1_terms {
            dim("L1 reference", r.len(), n)?;
        }
        dim("b", b.len(), a.len())?;
        for row in &a {
            dim("row of A", row.len(), n)?;
        }
        dim("h", h.len(), g.len())?;
        for row in &g {
            dim("row of G", row.len(), n)?;
        }
        let m = Self {
            c,
            l1_terms,
            a,
            b,
            g,
            h,
        };
        let finite = m
            .c
            .iter()
            .chain(m.l1_terms.iter().flatten())
            .chain(m.a.iter().flatten())
            .chain(&m.b)
            .chain(m.g.iter().flatten())
            .chain(&m.h)
            .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::NonFinite(0));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn s_dim(&self) -> usize {
        self.b.len()
    }

    pub fn linear_cost(&self) -> &[f64] {
        &self.c
    }

    pub fn l1_terms(&self) -> &[Vec<f64>] {
        &self.l1_terms
    }

    pub fn coupling_matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn coupling_offset(&self) -> &[f64] {
        &self.b
    }

    pub fn local_matrix(&self) -> &[Vec<f64>] {
        &self.g
    }

    pub fn local_rhs(&self) -> &[f64] {
        &self.h
    }

    /// `f_i(x)`
    pub fn cost(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.c.iter().zip(x).map(|(c, x)| c * x).sum();
        let l1: f64 = self
            .l1_terms
            .iter()
            .map(|r| r.iter().zip(x).map(|(r, x)| (x - r).abs()).sum::<f64>())
            .sum();
        lin + l1
    }

    /// `g_i(x) = A x − b`
    pub fn coupling(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - b)
            .collect()
    }

    /// Largest violation of `G x ≤ h`, or 0.
    pub fn local_violation(&self, x: &[f64]) -> f64 {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(row, h)| row.iter().zip(x).map(|(g, x)| g * x).sum::<f64>() - h)
            .fold(0.0, f64::max)
    }

    /// Adds `x`, the epigraph variables, the local rows and the epigraph
    /// rows `±(x_k − r_k) ≤ t_k`. The objective gets `cᵀx + Σ t`.
    pub fn add_to_lp(&self, lp: &mut LpBuilder) -> AgentColumns {
        let n = self.dim();
        let x = lp.add_vars(n, 0.0);
        for (k, c) in self.c.iter().enumerate() {
            lp.set_cost(x.start + k, *c);
        }
        let aux = lp.add_vars(n * self.l1_terms.len(), 1.0);
        for (row, h) in self.g.iter().zip(&self.h) {
            lp.add_row(row.iter().enumerate().map(|(k, v)| (x.start + k, *v)), *h);
        }
        for (term, r) in self.l1_terms.iter().enumerate() {
            for (k, rk) in r.iter().enumerate() {
                let t = aux.start + term * n + k;
                lp.add_row([(x.start + k, 1.0), (t, -1.0)], *rk);
                lp.add_row([(x.start + k, -1.0), (t, -1.0)], -rk);
            }
        }
        AgentColumns { x, aux }
    }

    /// `min_{X_i} f_i` and a minimizer.
    pub fn local_minimum(&self, solver: &LpSolver) -> Result<(f64, Vec<f64>), LpError> {
        let mut lp = LpBuilder::new();
        let cols = self.add_to_lp(&mut lp);
        let sol = solver.solve_optimal(&lp.build()?)?;
        let x = sol.x[cols.x].to_vec();
        Ok((self.cost(&x), x))
    }

    /// Checks that `X_i` is nonempty and bounded by minimizing and maximizing
    /// every coordinate.
    pub fn check_local_set(&self, solver: &LpSolver) -> Result<(), LpError> {
        let n = self.dim();
        for k in 0..n {
            for sign in [1.0, -1.0] {
                let mut lp = LpBuilder::new();
                let x = lp.add_vars(n, 0.0);
                lp.set_cost(x.start + k, sign);
                for (row, h) in self.g.iter().zip(&self.h) {
                    lp.add_row(row.iter().enumerate().map(|(j, v)| (x.start + j, *v)), *h);
                }
                solver.solve_optimal(&lp.build()?)?;
            }
        }
        Ok(())
    }
}

/// The full problem: `N` agents sharing `S` coupling components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemFile", into = "ProblemFile")]
pub struct CoupledProblem {
    agents: Vec<AgentModel>,
    s_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    schema_version: u32,
    s_dim: usize,
    agents: Vec<AgentModel>,
}

impl From<CoupledProblem> for ProblemFile {
    fn from(p: CoupledProblem) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            s_dim: p.s_dim,
            agents: p.agents,
        }
    }
}

impl TryFrom<ProblemFile> for CoupledProblem {
    type Error = ModelError;

    fn try_from(f: ProblemFile) -> Result<Self, Self::Error> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(ModelError::SchemaVersion(f.schema_version));
        }
        let p = CoupledProblem::new(f.agents)?;
        if p.s_dim != f.s_dim {
            return Err(ModelError::Dimension(format!(
                "s_dim is {} but agents have {} coupling rows",
                f.s_dim, p.s_dim
            )));
        }
        Ok(p)
    }
}

/// Coupling-component slacks of a Slater point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterReport {
    /// `−Σ_i g_is(x̄_i)` per component.
    pub slacks: Vec<f64>,
    /// Smallest slack.
    pub gamma: f64,
}

/// Sufficient penalty level derived from a Slater point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MBound {
    /// `(1/γ) Σ_i (f_i(x̄_i) − min_{X_i} f_i)`
    pub threshold: f64,
    pub gamma: f64,
    /// `f_i(x̄_i) − min_{X_i} f_i` per agent.
    pub gaps: Vec<f64>,
}

/// Optimum of the stacked problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedSolution {
    pub x: Vec<Vec<f64>>,
    pub f_star: f64,
    /// Multipliers of the coupling rows.
    pub mu_star: Vec<f64>,
    pub kkt_residual: f64,
}

/// Tolerance for membership of a Slater point in its local set.
const MEMBERSHIP_TOL: f64 = 1e-9;

impl CoupledProblem {
    pub fn new(agents: Vec<AgentModel>) -> Result<Self, ModelError> {
        let s_dim = agents.first().ok_or(ModelError::NoAgents)?.s_dim();
        if let Some(i) = agents.iter().position(|a| a.s_dim() != s_dim) {
            return Err(ModelError::Dimension(format!(
                "agent {i} has {} coupling rows, agent 0 has {s_dim}",
                agents[i].s_dim()
            )));
        }
        Ok(Self { agents, s_dim })
    }

    pub fn agents(&self) -> &[AgentModel] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn s_dim(&self) -> usize {
        self.s_dim
    }

    /// Every local set nonempty and bounded.
    pub fn check_local_sets(&self, solver: &LpSolver) -> Result<(), ModelError> {
        for (agent, a) in self.agents.iter().enumerate() {
            a.check_local_set(solver)
                .map_err(|source| ModelError::BadLocalSet { agent, source })?;
        }
        Ok(())
    }

    /// `Σ_i f_i(x_i)`
    pub fn total_cost(&self, x: &[Vec<f64>]) -> f64 {
        self.agents.iter().zip(x).map(|(a, x)| a.cost(x)).sum()
    }

    /// `Σ_i g_i(x_i)`
    pub fn total_coupling(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut total = vec![0.0; self.s_dim];
        for (a, x) in self.agents.iter().zip(x) {
            for (t, v) in total.iter_mut().zip(a.coupling(x)) {
                *t += v;
            }
        }
        total
    }

    pub fn validate_slater(&self, points: &[Vec<f64>]) -> Result<SlaterReport, ModelError> {
        if points.len() != self.n_agents() {
            return Err(ModelError::Dimension(format!(
                "{} Slater points for {} agents",
                points.len(),
                self.n_agents()
            )));
        }
        for (i, (a, x)) in self.agents.iter().zip(points).enumerate() {
            if x.len() != a.dim() {
                return Err(ModelError::Dimension(format!(
                    "Slater point {i} has length {}, expected {}",
                    x.len(),
                    a.dim()
                )));
            }
            if a.local_violation(x) > MEMBERSHIP_TOL {
                return Err(ModelError::NotInLocalSet(i));
            }
        }
        let slacks: Vec<f64> = self.total_coupling(points).iter().map(|v| -v).collect();
        if let Some(s) = slacks.iter().position(|v| !(*v > 0.0)) {
            return Err(ModelError::NotStrictlyFeasible(s));
        }
        let gamma = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(SlaterReport { slacks, gamma })
    }

    pub fn m_lower_bound(&self, points: &[Vec<f64>], solver: &LpSolver) -> Result<MBound, ModelError> {
        let report = self.validate_slater(points)?;
        let mut gaps = Vec::with_capacity(self.n_agents());
        for (agent, (a, x)) in self.agents.iter().zip(points).enumerate() {
            let (min, _) = a
                .local_minimum(solver)
                .map_err(|source| ModelError::LocalMinFailed { agent, source })?;
            // The solver's minimum can sit a hair above the exact one.
            gaps.push((a.cost(x) - min).max(0.0));
        }
        Ok(MBound {
            threshold: gaps.iter().sum::<f64>() / report.gamma,
            gamma: report.gamma,
            gaps,
        })
    }

    /// Solves the problem as one LP.
    pub fn centralized_reference(&self, solver: &LpSolver) -> Result<CentralizedSolution, ModelError> {
        let mut lp = LpBuilder::new();
        let cols: Vec<AgentColumns> = self.agents.iter().map(|a| a.add_to_lp(&mut lp)).collect();
        let mut coupling_rows = Vec::with_capacity(self.s_dim);
        for s in 0..self.s_dim {
            let mut coeffs = Vec::new();
            let mut rhs = 0.0;
            for (a, c) in self.agents.iter().zip(&cols) {
                coeffs.extend(a.a[s].iter().enumerate().map(|(k, v)| (c.x.start + k, *v)));
                rhs += a.b[s];
            }
            coupling_rows.push(lp.add_row(coeffs, rhs));
        }
        let lp = lp.build().map_err(ModelError::SolverFailure)?;
        let sol = solver.solve_optimal(&lp).map_err(ModelError::SolverFailure)?;
        let x: Vec<Vec<f64>> = cols.iter().map(|c| sol.x[c.x.clone()].to_vec()).collect();
        Ok(CentralizedSolution {
            f_star: self.total_cost(&x),
            mu_star: coupling_rows.iter().map(|&r| sol.lambda[r]).collect(),
            kkt_residual: kkt_check(&lp, &sol).max(),
            x,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(x) = x` on `[0, 1]`, `g(x) = x − 1`.
    fn unit_agent() -> AgentModel {
        let (g, h) = box_rows(&[0.0], &[1.0]);
        AgentModel::new(vec![1.0], vec![], vec![vec![1.0]], vec![1.0], g, h).unwrap()
    }

    #[test]
    fn single_agent_slater_and_threshold() {
        let p = CoupledProblem::new(vec![unit_agent()]).unwrap();
        let r = p.validate_slater(&[vec![0.0]]).unwrap();
        assert_eq!(r.gamma, 1.0);
        let m = p.m_lower_bound(&[vec![0.0]], &LpSolver::default()).unwrap();
        assert!(m.threshold.abs() < 1e-8);
    }

    #[test]
    fn slater_rejects_boundary_and_outside_points() {
        let p = CoupledProblem::new(vec![unit_agent()]).unwrap();
        assert_eq!(p.validate_slater(&[vec![1.0]]), Err(ModelError::NotStrictlyFeasible(0)));
        assert_eq!(p.validate_slater(&[vec![-0.5]]), Err(ModelError::NotInLocalSet(0)));
    }

    #[test]
    fn two_agent_hand_instance() {
        // min x1 + x2  s.t.  −x1 − x2 ≤ −1,  x_i ∈ [0, 1]
        let agent = || {
            let (g, h) = box_rows(&[0.0], &[1.0]);
            AgentModel::new(vec![1.0], vec![], vec![vec![-1.0]], vec![-0.5], g, h).unwrap()
        };
        let p = CoupledProblem::new(vec![agent(), agent()]).unwrap();
        let c = p.centralized_reference(&LpSolver::default()).unwrap();
        assert!((c.f_star - 1.0).abs() < 1e-7);
        assert!((c.mu_star[0] - 1.0).abs() < 1e-7);
        assert!(c.kkt_residual <= 1e-8);
    }

    #[test]
    fn decoupled_problem_has_zero_multiplier() {
        let agent = |r: f64| {
            let (g, h) = box_rows(&[-2.0, -2.0], &[2.0, 2.0]);
            AgentModel::new(vec![0.0, 0.0], vec![vec![r, -r]], vec![vec![0.0, 0.0]], vec![1.0], g, h)
                .unwrap()
        };
        let p = CoupledProblem::new(vec![agent(1.0), agent(3.0)]).unwrap();
        let solver = LpSolver::default();
        let c = p.centralized_reference(&solver).unwrap();
        let local: f64 = p.agents().iter().map(|a| a.local_minimum(&solver).unwrap().0).sum();
        assert!((c.f_star - local).abs() < 1e-7);
        assert!((local - 2.0).abs() < 1e-7);
        assert!(c.mu_star[0].abs() < 1e-8);
    }

    #[test]
    fn cost_includes_l1_terms() {
        let (g, h) = box_rows(&[-1.0, -1.0], &[1.0, 1.0]);
        let a = AgentModel::new(
            vec![1.0, 0.0],
            vec![vec![0.0, 2.0], vec![1.0, 1.0]],
            vec![vec![1.0, 1.0]],
            vec![0.5],
            g,
            h,
        )
        .unwrap();
        // 0.5 + (0.5 + 2) + (0.5 + 1)
        assert_eq!(a.cost(&[0.5, 0.0]), 4.5);
        assert_eq!(a.coupling(&[0.5, 0.0]), vec![0.0]);
    }

    #[test]
    fn rejects_unbounded_local_set() {
        let a = AgentModel::new(vec![1.0], vec![], vec![vec![1.0]], vec![0.0], vec![vec![1.0]], vec![1.0])
            .unwrap();
        let p = CoupledProblem::new(vec![a]).unwrap();
        assert!(matches!(
            p.check_local_sets(&LpSolver::default()),
            Err(ModelError::BadLocalSet { agent: 0, .. })
        ));
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        let e = AgentModel::new(vec![1.0], vec![], vec![vec![1.0, 2.0]], vec![0.0], vec![], vec![]);
        assert!(matches!(e, Err(ModelError::Dimension(_))));
        let other = AgentModel::new(vec![1.0], vec![], vec![], vec![], vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(
            CoupledProblem::new(vec![unit_agent(), other]),
            Err(ModelError::Dimension(_))
        ));
        assert_eq!(CoupledProblem::new(vec![]), Err(ModelError::NoAgents));
    }

    #[test]
    fn json_round_trip_and_schema_guard() {
        let p = CoupledProblem::new(vec![unit_agent()]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"schema_version\":1"));
        assert!(text.contains("\"A\""));
        let back: CoupledProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let future = text.replace("\"schema_version\":1", "\"schema_version\":7");
        assert!(serde_json::from_str::<CoupledProblem>(&future).is_err());
    }
}
