//! Per-round metrics of a trace.

use serde::{Deserialize, Serialize};

use crate::trace::{cost_error, RoundTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: u64,
    pub cost_err: f64,
    pub max_coupling: f64,
    pub max_rho: Option<f64>,
    /// Smallest cost up to and including round `t`.
    pub f_best: f64,
}

pub fn metrics(trace: &[RoundTrace], f_star: f64) -> Vec<MetricRow> {
    let mut f_best = f64::INFINITY;
    trace
        .iter()
        .map(|row| {
            f_best = f_best.min(row.cost);
            MetricRow {
                t: row.t,
                cost_err: cost_error(row.cost, f_star),
                max_coupling: row.max_coupling(),
                max_rho: row.max_rho(),
                f_best,
            }
        })
        .collect()
}
