//! Reference computations shared by the integration tests. Everything here
//! is deliberately naive and independent of the library under test.
#![allow(dead_code)]

use itertools::Itertools;

/// Gaussian elimination with partial pivoting. `None` when singular.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-11 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Rank by row reduction with a relative pivot threshold.
pub fn rank(mut a: Vec<Vec<f64>>) -> usize {
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let piv = (r..rows)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        if a[piv][c].abs() <= 1e-9 * scale {
            continue;
        }
        a.swap(r, piv);
        for i in 0..rows {
            if i != r {
                let f = a[i][c] / a[r][c];
                for k in c..cols {
                    a[i][k] -= f * a[r][k];
                }
            }
        }
        r += 1;
    }
    r
}

/// Minimum of `cᵀx` over the vertices of `{x : Gx ≤ h}`, by trying every
/// `n`-subset of rows as the active set. Valid for bounded LPs whose
/// feasible set has at least one vertex.
pub fn vertex_min(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for active in (0..g.len()).combinations(n) {
        let a = active.iter().map(|&r| g[r].clone()).collect();
        let b = active.iter().map(|&r| h[r]).collect();
        let Some(x) = gauss_solve(a, b) else { continue };
        let feasible = g.iter().zip(h).all(|(row, hk)| {
            let lhs: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            lhs <= hk + 1e-9 * (1.0 + hk.abs())
        });
        if !feasible {
            continue;
        }
        let obj: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        if best.as_ref().is_none_or(|(v, _)| obj < *v) {
            best = Some((obj, x));
        }
    }
    best
}

/// Random bounded, strictly feasible LP: rows around an interior point and
/// a cost in the negative cone of the rows.
pub fn random_lp(rng: &mut impl rand::Rng, n: usize, m: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let h = g
        .iter()
        .map(|row: &Vec<f64>| {
            row.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(0.1..1.0)
        })
        .collect();
    let mut c = vec![0.0; n];
    for row in &g {
        let w: f64 = rng.gen_range(-0.5f64..1.0).max(0.0);
        for (cj, a) in c.iter_mut().zip(row) {
            *cj -= w * a;
        }
    }
    (c, g, h)
}
