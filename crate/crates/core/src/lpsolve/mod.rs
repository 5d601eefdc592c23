//! Dense linear programming in inequality form.
//!
//! Every LP in the crate is posed as
//!
//! ```text
//!   min  cᵀx
//!   s.t. Gx ≤ h
//! ```
//!
//! with `x` free. The solver is a homogeneous self-dual interior point
//! method with a Mehrotra predictor-corrector step. It returns the primal
//! point together with one multiplier per inequality row, so callers can
//! read Lagrange multipliers of any row block straight off the solution.

mod builder;
mod ipm;
mod kkt;
mod vertex;

pub use builder::LpBuilder;
pub use kkt::{kkt_check, kkt_check_with_rhs, KktReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance on every KKT residual.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in LP data")]
    NonFinite,
    #[error("LP is infeasible")]
    Infeasible,
    #[error("LP is unbounded")]
    Unbounded,
    #[error("no convergence after {iterations} iterations (kkt residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("numerical breakdown at iteration {0}")]
    Numerical(usize),
}

/// `min cᵀx s.t. Gx ≤ h`, with `G` stored row-major.
///
/// The sparsity pattern of `G` is extracted once at construction; the
/// interior point method only touches the nonzeros when forming the
/// normal equations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LpDump", into = "LpDump")]
pub struct StandardLp {
    n: usize,
    m: usize,
    c: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl StandardLp {
    /// Builds an LP from a row-major `m × n` matrix.
    pub fn new(c: Vec<f64>, g: Vec<f64>, h: Vec<f64>) -> Result<Self, LpError> {
        let n = c.len();
        let m = h.len();
        if g.len() != m * n {
            return Err(LpError::Dimension(format!(
                "G has {} entries, expected {}×{}",
                g.len(),
                m,
                n
            )));
        }
        if c.iter().chain(&g).chain(&h).any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        let rows = (0..m)
            .map(|r| {
                g[r * n..(r + 1) * n]
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Ok(Self { n, m, c, g, h, rows })
    }

    /// Builds an LP from a list of dense rows.
    pub fn from_rows(c: Vec<f64>, rows: &[Vec<f64>], h: Vec<f64>) -> Result<Self, LpError> {
        let n = c.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(LpError::Dimension(format!(
                "row {bad} has {} entries, expected {n}",
                rows[bad].len()
            )));
        }
        let g = rows.iter().flatten().copied().collect();
        Self::new(c, g, h)
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Row-major constraint matrix.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.g[r * self.n..(r + 1) * self.n]
    }

    /// Replaces a single right-hand side entry. Used to re-solve the same
    /// subproblem for a new resource allocation.
    pub fn set_rhs(&mut self, r: usize, value: f64) {
        self.h[r] = value;
    }

    /// Replaces a single cost coefficient.
    pub fn set_cost(&mut self, j: usize, value: f64) {
        self.c[j] = value;
    }

    /// Scales row `r` of `(G, h)` by `s`.
    pub fn scale_row(&mut self, r: usize, s: f64) {
        for v in &mut self.g[r * self.n..(r + 1) * self.n] {
            *v *= s;
        }
        for (_, v) in &mut self.rows[r] {
            *v *= s;
        }
        self.h[r] *= s;
    }

    pub(crate) fn sparse_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// `Gx`
    pub fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.g_mul_into(x, &mut out);
        out
    }

    /// `Gᵀz`
    pub fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.gt_mul_into(z, &mut out);
        out
    }

    pub(crate) fn g_mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    pub(crate) fn gt_mul_into(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &zr) in self.rows.iter().zip(z) {
            for &(j, v) in row {
                out[j] += v * zr;
            }
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }
}

/// Debug dump format: `{"c": [...], "G": [[...], ...], "h": [...]}`.
#[derive(Serialize, Deserialize)]
struct LpDump {
    c: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl From<StandardLp> for LpDump {
    fn from(lp: StandardLp) -> Self {
        let g = (0..lp.m).map(|r| lp.row(r).to_vec()).collect();
        LpDump { c: lp.c, g, h: lp.h }
    }
}

impl TryFrom<LpDump> for StandardLp {
    type Error = LpError;

    fn try_from(d: LpDump) -> Result<Self, Self::Error> {
        StandardLp::from_rows(d.c, &d.g, d.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    /// `lambda` holds a Farkas certificate: `λ ≥ 0`, `Gᵀλ = 0`, `hᵀλ < 0`.
    Infeasible,
    /// `x` holds a recession direction: `Gx ≤ 0`, `cᵀx < 0`.
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One multiplier per row of `G`.
    pub lambda: Vec<f64>,
    pub status: LpStatus,
    /// Largest of the four KKT residuals at `(x, lambda)`; zero unless optimal.
    pub kkt_residual: f64,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    /// Turns an infeasible or unbounded outcome into the matching error.
    pub fn into_optimal(self) -> Result<Self, LpError> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(LpError::Infeasible),
            LpStatus::Unbounded => Err(LpError::Unbounded),
        }
    }
}

/// Interior point solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSolver {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LpSolver {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl LpSolver {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    /// Solves `lp`. Infeasible and unbounded problems come back as `Ok`
    /// with the corresponding status and certificate.
    pub fn solve(&self, lp: &StandardLp) -> Result<LpSolution, LpError> {
        ipm::solve(lp, lp.h(), self.tol, self.max_iter)
    }

    /// Solves `lp` with `h` replaced by `rhs`, leaving `lp` untouched.
    pub fn solve_with_rhs(&self, lp: &StandardLp, rhs: &[f64]) -> Result<LpSolution, LpError> {
        if rhs.len() != lp.num_rows() {
            return Err(LpError::Dimension(format!(
                "rhs has {} entries, LP has {} rows",
                rhs.len(),
                lp.num_rows()
            )));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
        ipm::solve(lp, rhs, self.tol, self.max_iter)
    }

    /// Like [`LpSolver::solve`] but treats anything other than an optimum
    /// as an error.
    pub fn solve_optimal(&self, lp: &StandardLp) -> Result<LpSolution, LpError> {
        self.solve(lp)?.into_optimal()
    }
}

/// Free-function form of [`LpSolver::solve`].
pub fn solve(lp: &StandardLp, tol: f64) -> Result<LpSolution, LpError> {
    LpSolver::with_tol(tol).solve(lp)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        let err = StandardLp::new(vec![1.0, 2.0], vec![1.0; 3], vec![0.0]).unwrap_err();
        assert!(matches!(err, LpError::Dimension(_)));
        let err = StandardLp::from_rows(vec![1.0], &[vec![1.0, 2.0]], vec![0.0]).unwrap_err();
        assert!(matches!(err, LpError::Dimension(_)));
    }

    #[test]
    fn rejects_nan() {
        let err = StandardLp::new(vec![f64::NAN], vec![1.0], vec![0.0]).unwrap_err();
        assert_eq!(err, LpError::NonFinite);
    }

    #[test]
    fn json_dump_round_trips() {
        let lp = StandardLp::from_rows(vec![1.0, -1.0], &[vec![1.0, 0.0], vec![0.0, 2.0]], vec![3.0, 4.0])
            .unwrap();
        let text = serde_json::to_string(&lp).unwrap();
        assert!(text.contains("\"G\""));
        let back: StandardLp = serde_json::from_str(&text).unwrap();
        assert_eq!(back.g(), lp.g());
        assert_eq!(back.h(), lp.h());
    }

    #[test]
    fn scale_row_updates_sparse_pattern() {
        let mut lp = StandardLp::from_rows(vec![0.0, 0.0], &[vec![1.0, 2.0]], vec![3.0]).unwrap();
        lp.scale_row(0, 2.0);
        assert_eq!(lp.g_mul(&[1.0, 1.0]), vec![6.0]);
        assert_eq!(lp.h(), &[6.0]);
    }
}
