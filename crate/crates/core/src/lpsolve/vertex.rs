//! Vertex polishing of a nearly optimal interior point iterate.
//!
//! Rows are ranked by `z_k / s_k`, which separates the active constraints
//! from the inactive ones long before the interior point residuals reach
//! machine accuracy. The first `n` linearly independent rows in that order
//! form a basis `B`; the candidate is then the vertex `G_B x = h_B` with
//! multipliers `G_Bᵀ λ_B = −c` and `λ = 0` off the basis. The candidate is
//! only used if it passes the full KKT check, so a wrong guess costs one
//! small factorization and nothing else.

use nalgebra::{DMatrix, DVector};

use super::kkt::KktReport;
use super::{dot, StandardLp};

/// A row joins the basis if its component orthogonal to the rows already
/// chosen keeps at least this fraction of its norm.
const INDEPENDENCE: f64 = 1e-9;

pub(super) struct Vertex {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub report: KktReport,
    pub objective: f64,
}

/// Tries the vertices suggested by slacks `s` and multipliers `z`.
///
/// On degenerate optima `z_k / s_k` can rank a tied but wrong row first, so
/// the smallest scaled slack and the largest multiplier are tried as well.
pub(super) fn polish(lp: &StandardLp, h: &[f64], s: &[f64], z: &[f64], tol: f64) -> Option<Vertex> {
    let m = lp.num_rows();
    let norms: Vec<f64> = (0..m).map(|k| dot(lp.row(k), lp.row(k)).sqrt().max(f64::MIN_POSITIVE)).collect();
    let rankings: [Box<dyn Fn(usize) -> f64>; 3] = [
        Box::new(|k| z[k] / s[k].max(f64::MIN_POSITIVE)),
        Box::new(|k| -s[k] / norms[k]),
        Box::new(|k| z[k]),
    ];
    rankings.iter().find_map(|score| {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
        try_basis(lp, h, &order, tol)
    })
}

fn try_basis(lp: &StandardLp, h: &[f64], order: &[usize], tol: f64) -> Option<Vertex> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    let mut basis = Vec::with_capacity(n);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &k in order {
        if basis.len() == n {
            break;
        }
        let row = lp.row(k);
        let norm = dot(row, row).sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        // Two passes of Gram-Schmidt keep the test reliable.
        for _ in 0..2 {
            for q in &ortho {
                let p = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
            }
        }
        let rest = dot(&v, &v).sqrt();
        if rest > INDEPENDENCE * norm {
            v.iter_mut().for_each(|a| *a /= rest);
            ortho.push(v);
            basis.push(k);
        }
    }
    if basis.len() < n {
        log::trace!("vertex polish: only {} independent rows", basis.len());
        return None;
    }

    let b = DMatrix::from_fn(n, n, |i, j| lp.row(basis[i])[j]);
    let lu = b.clone().lu();
    let xb = lu.solve(&DVector::from_iterator(n, basis.iter().map(|&k| h[k])))?;
    let lb = b.transpose().lu().solve(&DVector::from_iterator(n, lp.c().iter().map(|c| -c)))?;

    let x: Vec<f64> = xb.iter().copied().collect();
    let mut lambda = vec![0.0; m];
    for (&k, l) in basis.iter().zip(lb.iter()) {
        lambda[k] = *l;
    }
    let report = KktReport::evaluate(lp, h, &x, &lambda);
    let objective = dot(lp.c(), &x);
    log::trace!("vertex polish: basis {basis:?} {report:?}");
    let ok = report.max() <= tol && report.duality_gap <= tol * (1.0 + objective.abs());
    ok.then_some(Vertex {
        x,
        lambda,
        report,
        objective,
    })
}
