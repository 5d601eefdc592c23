//! The block method engine and the paired run against primal decomposition.

use serde::{Deserialize, Serialize};

use super::{edge_differences, local_subproblems, project_down, BlockError, BlockVector};
use crate::dpd::{round_trace, solve_all, worker_pool, AllocationState, Dpd, DpdConfig, RoundOutput};
use crate::graph::{EdgeActivation, UnderlyingGraph};
use crate::local::LocalSubproblem;
use crate::model::CoupledProblem;
use crate::trace::{RoundTrace, TraceSink};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    pub t: u64,
    pub z: BlockVector,
}

/// `z_ℓ^{t+1} = z_ℓ^t − α^t [∇̃p̃(z^t)]_ℓ` for every edge active at round
/// `t`; the other blocks are left alone.
pub struct BlockMethod<'a> {
    problem: &'a CoupledProblem,
    graph: &'a UnderlyingGraph,
    activation: &'a dyn EdgeActivation,
    config: DpdConfig,
    subs: Vec<LocalSubproblem>,
    state: BlockState,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> BlockMethod<'a> {
    /// `config.schedule` is the block step `α^t`.
    pub fn new(
        problem: &'a CoupledProblem,
        graph: &'a UnderlyingGraph,
        activation: &'a dyn EdgeActivation,
        config: DpdConfig,
        z0: BlockVector,
    ) -> Result<Self, BlockError> {
        if graph.n_agents() != problem.n_agents() {
            return Err(BlockError::Dimension(format!(
                "{} agents, {} graph nodes",
                problem.n_agents(),
                graph.n_agents()
            )));
        }
        if z0.num_blocks() != graph.num_edges() || z0.s_dim() != problem.s_dim() {
            return Err(BlockError::Dimension(format!(
                "z has {} blocks of dimension {}, expected {} of dimension {}",
                z0.num_blocks(),
                2 * z0.s_dim(),
                graph.num_edges(),
                2 * problem.s_dim()
            )));
        }
        Ok(Self {
            problem,
            graph,
            activation,
            config,
            subs: local_subproblems(problem, config.penalty)?,
            state: BlockState { t: 0, z: z0 },
            pool: worker_pool(config.workers).map_err(BlockError::Workers)?,
        })
    }

    pub fn state(&self) -> &BlockState {
        &self.state
    }

    /// `Πz` at the current round.
    pub fn allocations(&self) -> Vec<Vec<f64>> {
        project_down(&self.state.z, self.graph)
    }

    pub fn run_round(&mut self) -> Result<RoundOutput, BlockError> {
        let t = self.state.t;
        let y = self.allocations();
        let solutions = solve_all(self.pool.as_ref(), &self.subs, &y, &self.config.solver)
            .map_err(|(agent, source)| BlockError::Local { agent, source })?;
        let grad = edge_differences(self.graph, &solutions, self.problem.s_dim());
        let round = self.activation.sample_round(self.graph, t);
        let alpha = self.config.schedule.step(t);
        for &l in &round.active_edges {
            for (z, g) in self.state.z.block_mut(l).iter_mut().zip(grad.block(l)) {
                *z -= alpha * g;
            }
        }
        self.state.t += 1;
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

    pub fn run(&mut self, rounds: u64, sink: &mut dyn TraceSink) -> Result<(), BlockError> {
        for _ in 0..rounds {
            let out = self.run_round()?;
            sink.record(&out.trace)?;
        }
        sink.finish()?;
        Ok(())
    }
}

/// Primal decomposition and the block method side by side on the same
/// activation sequence, starting from `y^0 = Πz^0`. The primal
/// decomposition step is the block step times `dpd_step_factor`; with a
/// factor of 2 the two produce the same allocations.
pub struct PairedRun<'a> {
    graph: &'a UnderlyingGraph,
    dpd: Dpd<'a>,
    block: BlockMethod<'a>,
    max_gap: f64,
}

impl<'a> PairedRun<'a> {
    pub fn new(
        problem: &'a CoupledProblem,
        graph: &'a UnderlyingGraph,
        activation: &'a dyn EdgeActivation,
        config: DpdConfig,
        z0: BlockVector,
        dpd_step_factor: f64,
    ) -> Result<Self, BlockError> {
        let y0 = project_down(&z0, graph);
        let block = BlockMethod::new(problem, graph, activation, config, z0)?;
        let dpd_config = DpdConfig {
            schedule: config.schedule.scaled(dpd_step_factor),
            ..config
        };
        let dpd = Dpd::new(problem, graph, activation, dpd_config, AllocationState::new(y0)?)?;
        let mut run = Self {
            graph,
            dpd,
            block,
            max_gap: 0.0,
        };
        run.max_gap = run.gap();
        Ok(run)
    }

    /// `‖y − Πz‖∞` at the current round.
    pub fn gap(&self) -> f64 {
        let pz = project_down(&self.block.state.z, self.graph);
        self.dpd
            .allocations()
            .iter()
            .flatten()
            .zip(pz.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest gap over every round so far.
    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }

    pub fn dpd(&self) -> &Dpd<'a> {
        &self.dpd
    }

    pub fn block(&self) -> &BlockMethod<'a> {
        &self.block
    }

    /// Advances both methods; the primal decomposition trace carries the
    /// running maximum gap.
    pub fn run_round(&mut self) -> Result<(RoundTrace, RoundTrace), BlockError> {
        let mut dpd = self.dpd.run_round()?.trace;
        let block = self.block.run_round()?.trace;
        self.max_gap = self.max_gap.max(self.gap());
        dpd.pz_gap = Some(self.max_gap);
        Ok((dpd, block))
    }

    pub fn run(&mut self, rounds: u64, sink: &mut dyn TraceSink) -> Result<(), BlockError> {
        for _ in 0..rounds {
            let (row, _) = self.run_round()?;
            sink.record(&row)?;
        }
        sink.finish()?;
        Ok(())
    }
}
