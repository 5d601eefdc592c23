use std::ops::Range;

use super::{LpError, StandardLp};

/// Incremental assembly of a [`StandardLp`] from sparse rows.
#[derive(Debug, Default, Clone)]
pub struct LpBuilder {
    c: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    h: Vec<f64>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `count` variables sharing the same cost coefficient.
    pub fn add_vars(&mut self, count: usize, cost: f64) -> Range<usize> {
        let start = self.c.len();
        self.c.extend(std::iter::repeat_n(cost, count));
        start..self.c.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.c[var] = cost;
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }

    /// Appends `Σ coeff·x[var] ≤ rhs` and returns its row index.
    pub fn add_row<I>(&mut self, coeffs: I, rhs: f64) -> usize
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        self.rows.push(coeffs.into_iter().filter(|(_, v)| *v != 0.0).collect());
        self.h.push(rhs);
        self.h.len() - 1
    }

    pub fn build(self) -> Result<StandardLp, LpError> {
        let n = self.c.len();
        let m = self.h.len();
        let mut g = vec![0.0; m * n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                if j >= n {
                    return Err(LpError::Dimension(format!(
                        "row {r} references variable {j} but only {n} exist"
                    )));
                }
                g[r * n + j] += v;
            }
        }
        StandardLp::new(self.c, g, self.h)
    }
}
