//! Round-synchronous simulation of distributed primal decomposition.
//!
//! At round `t` every agent solves its local subproblem with its current
//! allocation `y_i^t`, sends the multipliers `μ_i^t` over the active edges,
//! and then updates
//!
//! ```text
//!   y_i^{t+1} = y_i^t + α^t Σ_{j ∈ N_i^t} (μ_i^t − μ_j^t)
//! ```
//!
//! summing over active neighbors in ascending order.

mod schedule;

use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeActivation, UnderlyingGraph};
use crate::local::{LocalError, LocalSolution, LocalSubproblem};
use crate::lpsolve::LpSolver;
use crate::model::CoupledProblem;
use crate::trace::{AgentRound, RoundTrace, TraceSink};

pub use schedule::{ScheduleParseError, StepSchedule};

/// Initial allocations must sum to zero within this tolerance.
pub const INIT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DpdError {
    #[error("agent {agent}: {source}")]
    Local { agent: usize, source: LocalError },
    #[error("initial allocations sum to {0:e}, expected zero")]
    NonZeroSum(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("writing trace: {0}")]
    Sink(#[from] io::Error),
}

/// Named initial allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPreset {
    /// `y_i = 0`
    Zero,
    /// `y_i = 5(N + 1 − 2i)·1` for 1-based `i`, which sums to zero.
    Asym,
}

impl InitPreset {
    pub fn allocations(&self, n: usize, s_dim: usize) -> Vec<Vec<f64>> {
        (1..=n)
            .map(|i| match self {
                InitPreset::Zero => vec![0.0; s_dim],
                InitPreset::Asym => vec![5.0 * (n as f64 + 1.0 - 2.0 * i as f64); s_dim],
            })
            .collect()
    }
}

impl FromStr for InitPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(InitPreset::Zero),
            "asym" => Ok(InitPreset::Asym),
            _ => Err(format!("unknown init preset {s:?}; expected zero or asym")),
        }
    }
}

/// `y_1^t, …, y_N^t` with `Σ_i y_i^0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub t: u64,
    pub y: Vec<Vec<f64>>,
    pub sum_y0: Vec<f64>,
}

impl AllocationState {
    pub fn new(y: Vec<Vec<f64>>) -> Result<Self, DpdError> {
        let s_dim = y.first().map_or(0, Vec::len);
        if let Some(i) = y.iter().position(|v| v.len() != s_dim) {
            return Err(DpdError::Dimension(format!(
                "allocation {i} has length {}, expected {s_dim}",
                y[i].len()
            )));
        }
        let sum_y0 = column_sum(&y, s_dim);
        let worst = sum_y0.iter().copied().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
        if worst.abs() > INIT_SUM_TOL {
            return Err(DpdError::NonZeroSum(worst));
        }
        Ok(Self { t: 0, y, sum_y0 })
    }

    pub fn preset(preset: InitPreset, problem: &CoupledProblem) -> Self {
        Self::new(preset.allocations(problem.n_agents(), problem.s_dim()))
            .expect("presets sum to zero")
    }

    /// `‖Σ_i y_i‖∞`
    pub fn sum_inf(&self) -> f64 {
        let s_dim = self.y.first().map_or(0, Vec::len);
        column_sum(&self.y, s_dim).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn column_sum(y: &[Vec<f64>], s_dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; s_dim];
    for v in y {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    sum
}

/// What an agent sends to its active neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct MuMessage {
    pub from: usize,
    pub mu: Vec<f64>,
}

/// One agent's private state. Its update reads nothing but its own state
/// and the messages in its inbox.
#[derive(Debug, Clone)]
pub struct DpdAgent {
    id: usize,
    sub: LocalSubproblem,
    y: Vec<f64>,
    last: Option<LocalSolution>,
}

impl DpdAgent {
    pub fn new(id: usize, sub: LocalSubproblem, y: Vec<f64>) -> Self {
        Self {
            id,
            sub,
            y,
            last: None,
        }
    }

    pub fn allocation(&self) -> &[f64] {
        &self.y
    }

    /// Solves the local subproblem at the current allocation.
    pub fn solve(&mut self, solver: &LpSolver) -> Result<&LocalSolution, LocalError> {
        let sol = self.sub.solve(&self.y, solver)?;
        Ok(self.last.insert(sol))
    }

    pub fn message(&self) -> MuMessage {
        MuMessage {
            from: self.id,
            mu: self.own_mu().to_vec(),
        }
    }

    fn own_mu(&self) -> &[f64] {
        &self.last.as_ref().expect("solve runs before the exchange").mu
    }

    /// `y_i += α Σ_j (μ_i − μ_j)` over `inbox`, which must be sorted by
    /// sender.
    pub fn apply(&mut self, alpha: f64, inbox: &[MuMessage]) {
        if inbox.is_empty() {
            return;
        }
        let mu = &self.last.as_ref().expect("solve runs before the exchange").mu;
        let mut acc = vec![0.0; self.y.len()];
        for msg in inbox {
            for ((a, mi), mj) in acc.iter_mut().zip(mu).zip(&msg.mu) {
                *a += mi - mj;
            }
        }
        for (y, a) in self.y.iter_mut().zip(&acc) {
            *y += alpha * a;
        }
    }
}

/// Engine parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpdConfig {
    pub penalty: f64,
    pub schedule: StepSchedule,
    pub solver: LpSolver,
    pub workers: usize,
}

/// Result of one round.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub trace: RoundTrace,
    pub solutions: Vec<LocalSolution>,
}

/// Builds the per-round trace from the local solutions at allocation `y`.
pub(crate) fn round_trace(
    problem: &CoupledProblem,
    t: u64,
    y: &[Vec<f64>],
    solutions: &[LocalSolution],
    penalty: f64,
    active_edges: usize,
) -> RoundTrace {
    let mut coupling = vec![0.0; problem.s_dim()];
    let mut cost = 0.0;
    let mut agents = Vec::with_capacity(solutions.len());
    for (a, sol) in problem.agents().iter().zip(solutions) {
        for (c, g) in coupling.iter_mut().zip(a.coupling(&sol.x)) {
            *c += g;
        }
        cost += a.cost(&sol.x) + penalty * sol.rho;
        agents.push(AgentRound {
            p_value: sol.p_value,
            rho: sol.rho,
            mu_l1: sol.mu_l1(),
        });
    }
    let s_dim = problem.s_dim();
    let sum_y = column_sum(y, s_dim).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    RoundTrace {
        t,
        cost,
        coupling,
        agents,
        sum_y_inf: Some(sum_y),
        active_edges,
        pz_gap: None,
    }
}

/// Worker pool for per-agent solves; `None` runs them on the caller.
pub(crate) fn worker_pool(workers: usize) -> Result<Option<rayon::ThreadPool>, String> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| e.to_string())
}

/// Solves `subs[i]` at `y[i]` for every agent, in parallel when a pool is
/// given. The result order is the agent order either way; a failure
/// carries the index of the agent.
pub(crate) fn solve_all(
    pool: Option<&rayon::ThreadPool>,
    subs: &[LocalSubproblem],
    y: &[Vec<f64>],
    solver: &LpSolver,
) -> Result<Vec<LocalSolution>, (usize, LocalError)> {
    let one = |(agent, (sub, y)): (usize, (&LocalSubproblem, &Vec<f64>))| {
        sub.solve(y, solver).map_err(|e| (agent, e))
    };
    match pool {
        Some(pool) => pool.install(|| {
            subs.par_iter()
                .zip(y)
                .enumerate()
                .map(one)
                .collect::<Result<Vec<_>, _>>()
        }),
        None => subs.iter().zip(y).enumerate().map(one).collect(),
    }
}

/// The distributed engine.
pub struct Dpd<'a> {
    problem: &'a CoupledProblem,
    graph: &'a UnderlyingGraph,
    activation: &'a dyn EdgeActivation,
    agents: Vec<DpdAgent>,
    config: DpdConfig,
    t: u64,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Dpd<'a> {
    pub fn new(
        problem: &'a CoupledProblem,
        graph: &'a UnderlyingGraph,
        activation: &'a dyn EdgeActivation,
        config: DpdConfig,
        init: AllocationState,
    ) -> Result<Self, DpdError> {
        if graph.n_agents() != problem.n_agents() || init.y.len() != problem.n_agents() {
            return Err(DpdError::Dimension(format!(
                "{} agents, {} graph nodes, {} allocations",
                problem.n_agents(),
                graph.n_agents(),
                init.y.len()
            )));
        }
        if init.sum_y0.len() != problem.s_dim() {
            return Err(DpdError::Dimension(format!(
                "allocations have length {}, coupling has {} rows",
                init.sum_y0.len(),
                problem.s_dim()
            )));
        }
        let agents = problem
            .agents()
            .iter()
            .zip(init.y)
            .enumerate()
            .map(|(i, (a, y))| {
                LocalSubproblem::new(a, config.penalty)
                    .map(|sub| DpdAgent::new(i, sub, y))
                    .map_err(|source| DpdError::Local { agent: i, source })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            problem,
            graph,
            activation,
            agents,
            config,
            t: init.t,
            pool: worker_pool(config.workers).map_err(DpdError::Workers)?,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Current allocations, for observation only.
    pub fn allocations(&self) -> Vec<Vec<f64>> {
        self.agents.iter().map(|a| a.y.clone()).collect()
    }

    pub fn state(&self) -> AllocationState {
        let y = self.allocations();
        let sum_y0 = vec![0.0; self.problem.s_dim()];
        AllocationState { t: self.t, y, sum_y0 }
    }

    /// Solve, exchange, update.
    pub fn run_round(&mut self) -> Result<RoundOutput, DpdError> {
        let t = self.t;
        let y = self.allocations();
        let solver = self.config.solver;
        let solve = |(i, agent): (usize, &mut DpdAgent)| {
            agent
                .solve(&solver)
                .cloned()
                .map_err(|source| DpdError::Local { agent: i, source })
        };
        let solutions: Vec<LocalSolution> = match &self.pool {
            Some(pool) => pool.install(|| {
                self.agents
                    .par_iter_mut()
                    .enumerate()
                    .map(solve)
                    .collect::<Result<Vec<_>, _>>()
            }),
            None => self.agents.iter_mut().enumerate().map(solve).collect(),
        }?;

        let round = self.activation.sample_round(self.graph, t);
        let outbox: Vec<MuMessage> = self.agents.iter().map(DpdAgent::message).collect();
        let alpha = self.config.schedule.step(t);
        for (agent, nbrs) in self.agents.iter_mut().zip(&round.neighbors) {
            let inbox: Vec<MuMessage> = nbrs.iter().map(|&j| outbox[j].clone()).collect();
            agent.apply(alpha, &inbox);
        }
        self.t += 1;

        let trace = round_trace(
            self.problem,
            t,
            &y,
            &solutions,
            self.config.penalty,
            round.active_edges.len(),
        );
        Ok(RoundOutput { trace, solutions })
    }

    /// Runs `rounds` rounds, streaming every trace row to `sink`.
    pub fn run(&mut self, rounds: u64, sink: &mut dyn TraceSink) -> Result<(), DpdError> {
        for _ in 0..rounds {
            let out = self.run_round()?;
            sink.record(&out.trace)?;
        }
        sink.finish()?;
        Ok(())
    }
}
