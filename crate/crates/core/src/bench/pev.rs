//! Charge-only electric vehicle charging: each vehicle picks a charging
//! rate per slot and the fleet shares a per-slot power budget.
//!
//! Vehicle `i` decides `u ∈ [0, 1]^T` (fraction of its rate `P_i` used in
//! each slot). Its state of charge after the horizon,
//! `E_init + ξ P ΔT Σ_k u_k`, must reach `E_ref` without exceeding
//! `E_cap`. The coupling rows are `Σ_i P_i u_i(k) ≤ P^max` per slot, split as
//! `A_i = P_i I` and `b_i = P^max / N`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dpd::{InitPreset, StepSchedule};
use crate::graph::{erdos_renyi_connected, EdgeProcess};
use crate::model::{AgentModel, CoupledProblem};

use super::{instance_rng, BenchError, Experiment};

/// Generator ranges. Intervals are sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PevParams {
    pub slots: usize,
    /// Slot length in hours.
    pub slot_hours: f64,
    /// Charging rate `P_i` in kW.
    pub rate: (f64, f64),
    /// Charging efficiency `ξ_i`.
    pub efficiency: (f64, f64),
    /// Battery capacity `E_cap` in kWh.
    pub capacity: (f64, f64),
    /// `E_init` as a fraction of the capacity.
    pub initial_fraction: (f64, f64),
    /// `E_ref` as a fraction of the capacity.
    pub target_fraction: (f64, f64),
    /// Base electricity price per slot, shared by all vehicles.
    pub price: (f64, f64),
    /// Relative per-vehicle price perturbation.
    pub price_noise: (f64, f64),
    /// `P^max / N` in kW.
    pub budget_per_vehicle: f64,
    /// Coupling rows are expressed in kW times this factor; the default
    /// of 1000 puts them in W.
    pub power_unit: f64,
    pub edge_probability: f64,
    pub activation: (f64, f64),
    pub penalty: f64,
}

impl Default for PevParams {
    fn default() -> Self {
        Self {
            slots: 12,
            slot_hours: 40.0 / 60.0,
            rate: (3.0, 5.0),
            efficiency: (0.85, 0.95),
            capacity: (5.0, 8.0),
            initial_fraction: (0.2, 0.5),
            target_fraction: (0.55, 0.8),
            price: (0.15, 0.35),
            price_noise: (-0.1, 0.1),
            budget_per_vehicle: 0.5,
            power_unit: 1000.0,
            edge_probability: 0.2,
            activation: (0.3, 0.9),
            penalty: 30.0,
        }
    }
}

const GRAPH_ATTEMPTS: usize = 10_000;

/// The fleet of `n` vehicles for `seed` with the default ranges.
pub fn gen_pev(seed: u64, n: usize) -> Result<Experiment, BenchError> {
    gen_pev_with(seed, n, &PevParams::default())
}

pub fn gen_pev_with(seed: u64, n: usize, params: &PevParams) -> Result<Experiment, BenchError> {
    if n < 2 {
        return Err(BenchError::TooFewAgents(n));
    }
    let mut rng = instance_rng(seed);
    let mut uniform = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let t_len = params.slots;
    let price: Vec<f64> = (0..t_len).map(|_| uniform(params.price)).collect();

    let mut agents = Vec::with_capacity(n);
    let mut slater = Vec::with_capacity(n);
    for _ in 0..n {
        let p = uniform(params.rate);
        let xi = uniform(params.efficiency);
        let cap = uniform(params.capacity);
        let e_init = cap * uniform(params.initial_fraction);
        let e_ref = cap * uniform(params.target_fraction);
        let gain = xi * p * params.slot_hours;

        let c: Vec<f64> = price
            .iter()
            .map(|&k| k * p * params.slot_hours * (1.0 + uniform(params.price_noise)))
            .collect();
        let mut g = Vec::with_capacity(2 * t_len + 2);
        let mut h = Vec::with_capacity(2 * t_len + 2);
        for k in 0..t_len {
            let mut up = vec![0.0; t_len];
            up[k] = 1.0;
            let down: Vec<f64> = up.iter().map(|v| -v).collect();
            g.extend([up, down]);
            h.extend([1.0, 0.0]);
        }
        g.push(vec![-gain; t_len]);
        h.push(e_init - e_ref);
        g.push(vec![gain; t_len]);
        h.push(cap - e_init);

        let a: Vec<Vec<f64>> = (0..t_len)
            .map(|k| {
                let mut row = vec![0.0; t_len];
                row[k] = p * params.power_unit;
                row
            })
            .collect();
        let b = vec![params.budget_per_vehicle * params.power_unit; t_len];

        // Uniform charging that just reaches the target, the least power
        // any feasible schedule can draw in its busiest slot.
        let u = (e_ref - e_init) / (gain * t_len as f64);
        slater.push(vec![u; t_len]);

        agents.push(AgentModel::new(c, vec![], a, b, g, h)?);
    }
    let problem = CoupledProblem::new(agents)?;

    let graph = erdos_renyi_connected(n, params.edge_probability, &mut rng, GRAPH_ATTEMPTS)?;
    let sigma: Vec<f64> = (0..graph.num_edges())
        .map(|_| rng.gen_range(params.activation.0..=params.activation.1))
        .collect();
    let process = EdgeProcess::new(graph, sigma, seed)?;

    Ok(Experiment {
        problem,
        process,
        slater,
        penalty: params.penalty,
        schedule: StepSchedule::Power { k: 1.0, p: 0.6 },
        init: InitPreset::Zero,
        seed,
        generator: "pev".into(),
        parameters: serde_json::to_value(params).expect("params serialize"),
    })
}
