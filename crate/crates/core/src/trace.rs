//! Per-round records, the CSV trace format and run summaries.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Coupling values at or below this count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Per-agent quantities of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRound {
    pub p_value: f64,
    pub rho: f64,
    pub mu_l1: f64,
}

/// Everything monitored at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub t: u64,
    /// `Σ (f_i + Mρ_i)` for primal decomposition, `Σ f_i` of the running
    /// averages for the dual baseline.
    pub cost: f64,
    /// `Σ_i g_i(x_i)` per component.
    pub coupling: Vec<f64>,
    /// Empty for the dual baseline.
    pub agents: Vec<AgentRound>,
    /// `‖Σ_i y_i‖∞`; absent when the algorithm has no allocations.
    pub sum_y_inf: Option<f64>,
    pub active_edges: usize,
    /// `max_t ‖y − Πz‖∞` in paired runs.
    pub pz_gap: Option<f64>,
}

impl RoundTrace {
    pub fn max_coupling(&self) -> f64 {
        self.coupling.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_rho(&self) -> Option<f64> {
        self.agents.iter().map(|a| a.rho).reduce(f64::max)
    }

    pub fn max_mu_l1(&self) -> Option<f64> {
        self.agents.iter().map(|a| a.mu_l1).reduce(f64::max)
    }

    pub fn sum_rho(&self) -> f64 {
        self.agents.iter().map(|a| a.rho).sum()
    }
}

/// `|cost − f*| / |f*|`, or the absolute error when `f* = 0`.
pub fn cost_error(cost: f64, f_star: f64) -> f64 {
    let err = (cost - f_star).abs();
    if f_star == 0.0 {
        err
    } else {
        err / f_star.abs()
    }
}

/// Which rounds are written: every round up to `dense_until`, then every
/// `every`-th. The last round is always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stride {
    pub dense_until: u64,
    pub every: u64,
}

impl Default for Stride {
    fn default() -> Self {
        Self {
            dense_until: 10_000,
            every: 10,
        }
    }
}

impl Stride {
    pub fn every_round() -> Self {
        Self {
            dense_until: u64::MAX,
            every: 1,
        }
    }

    pub fn keeps(&self, t: u64) -> bool {
        t < self.dense_until || t.is_multiple_of(self.every.max(1))
    }
}

pub trait TraceSink {
    fn record(&mut self, row: &RoundTrace) -> io::Result<()>;

    /// Called once after the last round.
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl TraceSink for Vec<RoundTrace> {
    fn record(&mut self, row: &RoundTrace) -> io::Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

/// CSV trace with header
/// `t,cost,cost_err,max_coupling,max_rho,sum_y_inf,active_edges`, plus
/// `pz_gap` for paired runs and `algorithm` when a label is set.
pub struct CsvTrace<W: Write> {
    out: W,
    f_star: f64,
    stride: Stride,
    with_pz_gap: bool,
    label: Option<String>,
    header_written: bool,
    pending: Option<RoundTrace>,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(out: W, f_star: f64, stride: Stride) -> Self {
        Self {
            out,
            f_star,
            stride,
            with_pz_gap: false,
            label: None,
            header_written: false,
            pending: None,
        }
    }

    pub fn with_pz_gap(mut self) -> Self {
        self.with_pz_gap = true;
        self
    }

    /// Adds a trailing `algorithm` column with this value on every row.
    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn into_inner(self) -> W {
        self.out
    }

    fn header(&mut self) -> io::Result<()> {
        if self.header_written {
            return Ok(());
        }
        self.header_written = true;
        write!(self.out, "t,cost,cost_err,max_coupling,max_rho,sum_y_inf,active_edges")?;
        if self.with_pz_gap {
            write!(self.out, ",pz_gap")?;
        }
        if self.label.is_some() {
            write!(self.out, ",algorithm")?;
        }
        writeln!(self.out)
    }

    fn write_row(&mut self, row: &RoundTrace) -> io::Result<()> {
        self.header()?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        write!(
            self.out,
            "{},{},{},{},{},{},{}",
            row.t,
            row.cost,
            cost_error(row.cost, self.f_star),
            row.max_coupling(),
            opt(row.max_rho()),
            opt(row.sum_y_inf),
            row.active_edges
        )?;
        if self.with_pz_gap {
            write!(self.out, ",{}", opt(row.pz_gap))?;
        }
        if let Some(label) = &self.label {
            write!(self.out, ",{label}")?;
        }
        writeln!(self.out)
    }
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn record(&mut self, row: &RoundTrace) -> io::Result<()> {
        if self.stride.keeps(row.t) {
            self.pending = None;
            self.write_row(row)
        } else {
            self.pending = Some(row.clone());
            Ok(())
        }
    }

    fn finish(&mut self) -> io::Result<()> {
        self.header()?;
        if let Some(row) = self.pending.take() {
            self.write_row(&row)?;
        }
        self.out.flush()
    }
}

/// Exact end-of-run metrics, accumulated over every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub f_star: f64,
    pub rounds: u64,
    pub final_cost: f64,
    pub final_cost_err: f64,
    pub final_max_coupling: f64,
    /// Smallest cost seen.
    pub f_best: f64,
    /// First round whose coupling is within [`FEASIBILITY_TOL`].
    pub first_feasible_round: Option<u64>,
    /// First round with `max_i ρ_i ≤ FEASIBILITY_TOL`.
    pub first_rho_round: Option<u64>,
    /// Largest `‖Σ_i y_i‖∞` over the run.
    pub max_sum_y: Option<f64>,
    pub max_mu_l1: Option<f64>,
    pub max_pz_gap: Option<f64>,
}

impl RunSummary {
    pub fn new(f_star: f64) -> Self {
        Self {
            f_star,
            rounds: 0,
            final_cost: f64::NAN,
            final_cost_err: f64::NAN,
            final_max_coupling: f64::NAN,
            f_best: f64::INFINITY,
            first_feasible_round: None,
            first_rho_round: None,
            max_sum_y: None,
            max_mu_l1: None,
            max_pz_gap: None,
        }
    }

    pub fn observe(&mut self, row: &RoundTrace) {
        let max = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.rounds = row.t + 1;
        self.final_cost = row.cost;
        self.final_cost_err = cost_error(row.cost, self.f_star);
        self.final_max_coupling = row.max_coupling();
        self.f_best = self.f_best.min(row.cost);
        if self.first_feasible_round.is_none() && row.max_coupling() <= FEASIBILITY_TOL {
            self.first_feasible_round = Some(row.t);
        }
        if self.first_rho_round.is_none() && row.max_rho().is_some_and(|r| r <= FEASIBILITY_TOL) {
            self.first_rho_round = Some(row.t);
        }
        self.max_sum_y = max(self.max_sum_y, row.sum_y_inf);
        self.max_mu_l1 = max(self.max_mu_l1, row.max_mu_l1());
        self.max_pz_gap = max(self.max_pz_gap, row.pz_gap);
    }
}

impl TraceSink for RunSummary {
    fn record(&mut self, row: &RoundTrace) -> io::Result<()> {
        self.observe(row);
        Ok(())
    }
}
