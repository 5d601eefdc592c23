//! Distributed dual subgradient with running-average primal recovery.
//!
//! Each round every agent mixes its multiplier with those of its active
//! neighbors (Metropolis weights), minimizes its Lagrangian
//! `f_i(x) + ℓ_iᵀ g_i(x)` over `X_i`, takes a projected ascent step
//! `λ_i = max(0, ℓ_i + α g_i(x_i))` and folds `x_i` into its running
//! average. The reported primal point is the running average.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpd::{worker_pool, StepSchedule};
use crate::graph::{EdgeActivation, RoundActivation, UnderlyingGraph};
use crate::lpsolve::{LpBuilder, LpError, LpSolver, StandardLp};
use crate::model::{AgentModel, CoupledProblem};
use crate::trace::{RoundTrace, TraceSink};

#[derive(Debug, Error)]
pub enum DualError {
    #[error("agent {agent}: Lagrangian minimization failed: {source}")]
    Solver { agent: usize, source: LpError },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("trace sink: {0}")]
    Sink(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualConfig {
    pub schedule: StepSchedule,
    pub solver: LpSolver,
    pub workers: usize,
}

/// Multipliers and running averages after `t` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub t: u64,
    pub lambda: Vec<Vec<f64>>,
    /// Mean of the local minimizers of rounds `0..t`; zero before the
    /// first round.
    pub xbar: Vec<Vec<f64>>,
}

/// Lagrangian subproblem of one agent; only the cost of `x` changes
/// between rounds.
#[derive(Debug, Clone)]
struct Lagrangian {
    lp: StandardLp,
    x: Range<usize>,
}

impl Lagrangian {
    fn new(agent: &AgentModel) -> Result<Self, LpError> {
        let mut b = LpBuilder::new();
        let cols = agent.add_to_lp(&mut b);
        Ok(Self {
            lp: b.build()?,
            x: cols.x,
        })
    }

    /// Minimizer of `f(x) + ℓᵀ(Ax − b)` over `X`.
    fn minimize(&mut self, agent: &AgentModel, ell: &[f64], solver: &LpSolver) -> Result<Vec<f64>, LpError> {
        for (k, c) in agent.linear_cost().iter().enumerate() {
            let shift: f64 = agent.coupling_matrix().iter().zip(ell).map(|(row, l)| row[k] * l).sum();
            self.lp.set_cost(self.x.start + k, c + shift);
        }
        let sol = solver.solve_optimal(&self.lp)?;
        Ok(sol.x[self.x.clone()].to_vec())
    }
}

/// Metropolis weights of agent `i` on the active subgraph: `w_ij` for each
/// active neighbor (ascending) and the self weight.
pub fn metropolis_weights(round: &RoundActivation, i: usize) -> (Vec<(usize, f64)>, f64) {
    let deg = |k: usize| round.neighbors[k].len();
    let nbrs: Vec<(usize, f64)> = round.neighbors[i]
        .iter()
        .map(|&j| (j, 1.0 / (1.0 + deg(i).max(deg(j)) as f64)))
        .collect();
    let own = 1.0 - nbrs.iter().map(|(_, w)| w).sum::<f64>();
    (nbrs, own)
}

pub struct DualSubgradient<'a> {
    problem: &'a CoupledProblem,
    graph: &'a UnderlyingGraph,
    activation: &'a dyn EdgeActivation,
    config: DualConfig,
    subs: Vec<Lagrangian>,
    state: DualState,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> DualSubgradient<'a> {
    /// Starts from `λ_i = 0`.
    pub fn new(
        problem: &'a CoupledProblem,
        graph: &'a UnderlyingGraph,
        activation: &'a dyn EdgeActivation,
        config: DualConfig,
    ) -> Result<Self, DualError> {
        if graph.n_agents() != problem.n_agents() {
            return Err(DualError::Dimension(format!(
                "{} agents, {} graph nodes",
                problem.n_agents(),
                graph.n_agents()
            )));
        }
        let subs = problem
            .agents()
            .iter()
            .enumerate()
            .map(|(agent, a)| Lagrangian::new(a).map_err(|source| DualError::Solver { agent, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let state = DualState {
            t: 0,
            lambda: vec![vec![0.0; problem.s_dim()]; problem.n_agents()],
            xbar: problem.agents().iter().map(|a| vec![0.0; a.dim()]).collect(),
        };
        let pool = worker_pool(config.workers).map_err(DualError::Workers)?;
        Ok(Self {
            problem,
            graph,
            activation,
            config,
            subs,
            state,
            pool,
        })
    }

    pub fn state(&self) -> &DualState {
        &self.state
    }

    /// Runs one round and returns the trace of the updated running average.
    pub fn run_round(&mut self) -> Result<RoundTrace, DualError> {
        let t = self.state.t;
        let round = self.activation.sample_round(self.graph, t);
        let lambda = &self.state.lambda;
        let mixed: Vec<Vec<f64>> = (0..self.problem.n_agents())
            .map(|i| {
                let (nbrs, own) = metropolis_weights(&round, i);
                let mut ell: Vec<f64> = lambda[i].iter().map(|l| own * l).collect();
                for (j, w) in nbrs {
                    for (e, l) in ell.iter_mut().zip(&lambda[j]) {
                        *e += w * l;
                    }
                }
                ell
            })
            .collect();

        let agents = self.problem.agents();
        let solver = self.config.solver;
        let solve = |(i, (sub, ell)): (usize, (&mut Lagrangian, &Vec<f64>))| {
            sub.minimize(&agents[i], ell, &solver)
                .map_err(|source| DualError::Solver { agent: i, source })
        };
        let xs: Vec<Vec<f64>> = match &self.pool {
            Some(pool) => pool.install(|| {
                self.subs
                    .par_iter_mut()
                    .zip(&mixed)
                    .enumerate()
                    .map(solve)
                    .collect::<Result<Vec<_>, _>>()
            }),
            None => self.subs.iter_mut().zip(&mixed).enumerate().map(solve).collect(),
        }?;

        let alpha = self.config.schedule.step(t);
        let weight = 1.0 / (t + 1) as f64;
        for (i, (x, ell)) in xs.iter().zip(mixed).enumerate() {
            let g = agents[i].coupling(x);
            self.state.lambda[i] = ell.iter().zip(&g).map(|(l, g)| (l + alpha * g).max(0.0)).collect();
            for (xb, xk) in self.state.xbar[i].iter_mut().zip(x) {
                *xb += (xk - *xb) * weight;
            }
        }
        self.state.t += 1;

        let xbar = &self.state.xbar;
        Ok(RoundTrace {
            t,
            cost: self.problem.total_cost(xbar),
            coupling: self.problem.total_coupling(xbar),
            agents: vec![],
            sum_y_inf: None,
            active_edges: round.active_edges.len(),
            pz_gap: None,
        })
    }

    pub fn run(&mut self, rounds: u64, sink: &mut dyn TraceSink) -> Result<(), DualError> {
        for _ in 0..rounds {
            let row = self.run_round()?;
            sink.record(&row)?;
        }
        sink.finish()?;
        Ok(())
    }
}

/// `q(λ) = Σ_i min_{X_i} f_i(x) + λᵀ g_i(x)`, a lower bound on `f*` for every
/// `λ ≥ 0`.
pub fn dual_value(problem: &CoupledProblem, lambda: &[f64], solver: &LpSolver) -> Result<f64, DualError> {
    if lambda.len() != problem.s_dim() {
        return Err(DualError::Dimension(format!(
            "multiplier has length {}, coupling has {} rows",
            lambda.len(),
            problem.s_dim()
        )));
    }
    let mut q = 0.0;
    for (i, a) in problem.agents().iter().enumerate() {
        let err = |source| DualError::Solver { agent: i, source };
        let x = Lagrangian::new(a).map_err(err)?.minimize(a, lambda, solver).map_err(err)?;
        let g = a.coupling(&x);
        q += a.cost(&x) + lambda.iter().zip(&g).map(|(l, g)| l * g).sum::<f64>();
    }
    Ok(q)
}
