//! Homogeneous self-dual interior point method for `min cᵀx s.t. Gx ≤ h`.
//!
//! The embedding works with `(x, s, z, τ, κ)` and drives the residuals
//!
//! ```text
//!   r_x = Gᵀz + cτ
//!   r_z = Gx + s − hτ
//!   r_τ = κ + cᵀx + hᵀz
//! ```
//!
//! to zero together with the complementarity products `s∘z` and `τκ`.
//! An optimum is read off as `(x/τ, z/τ)`. When `τ → 0` the iterate instead
//! converges to a certificate of primal or dual infeasibility.
//!
//! The LPs solved here are small and solved millions of times, so all
//! buffers live in one [`Workspace`] and the normal matrix is factored with
//! a plain dense Cholesky.

use super::kkt::KktReport;
use super::vertex;
use super::{dot, norm_inf, LpError, LpSolution, LpStatus, StandardLp};

const STEP_FRACTION: f64 = 0.99;
const REFINE_STEPS: usize = 2;
/// Refinement is skipped while `z/s` is this well conditioned.
const REFINE_SPREAD: f64 = 1e8;
/// Vertex polishing is attempted once the KKT residual, relative to the
/// size of the data, drops below this.
const POLISH_AT: f64 = 1e-4;
/// After a failed attempt the residual has to drop by this factor before
/// the next one; on large LPs an attempt costs more than an iteration.
const POLISH_SPACING: f64 = 10.0;

#[derive(Default)]
struct Direction {
    dx: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

impl Direction {
    fn new(n: usize, m: usize) -> Self {
        Self {
            dx: vec![0.0; n],
            dz: vec![0.0; m],
            ds: vec![0.0; m],
            dtau: 0.0,
            dkappa: 0.0,
        }
    }
}

/// Scratch space for one solve.
struct Workspace {
    n: usize,
    /// Lower Cholesky factor of `K = Gᵀ diag(z/s) G`, row-major `n × n`.
    l: Vec<f64>,
    w: Vec<f64>,
    q: Vec<f64>,
    v: Vec<f64>,
    /// `cᵀq + hᵀv = −‖W^{1/2}(Gq − h)‖²`
    cq_hv: f64,
    t: Vec<f64>,
    buf_n: Vec<f64>,
    buf_m: Vec<f64>,
    p: Vec<f64>,
    u: Vec<f64>,
    err: Rhs,
    corr: Direction,
    /// `max(w) / min(w)` at the current iterate.
    w_spread: f64,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            l: vec![0.0; n * n],
            w: vec![0.0; m],
            q: vec![0.0; n],
            v: vec![0.0; m],
            cq_hv: 0.0,
            t: vec![0.0; m],
            buf_n: vec![0.0; n],
            buf_m: vec![0.0; m],
            p: vec![0.0; n],
            u: vec![0.0; m],
            err: Rhs::new(n, m),
            corr: Direction::new(n, m),
            w_spread: 1.0,
        }
    }

    /// Forms and factors `K`, then solves for the `τ`-direction `(q, v)`.
    fn factor(&mut self, lp: &StandardLp, h: &[f64], s: &[f64], z: &[f64]) -> bool {
        let n = self.n;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for ((w, z), s) in self.w.iter_mut().zip(z).zip(s) {
            *w = z / s;
            lo = lo.min(*w);
            hi = hi.max(*w);
        }
        self.w_spread = hi / lo;
        self.l.iter_mut().for_each(|v| *v = 0.0);
        for (row, &wr) in lp.sparse_rows().iter().zip(&self.w) {
            for (a, &(ia, va)) in row.iter().enumerate() {
                let f = wr * va;
                for &(ib, vb) in &row[..=a] {
                    // Rows are sorted by column, so ia ≥ ib.
                    self.l[ia * n + ib] += f * vb;
                }
            }
        }
        if !cholesky_with_shift(&mut self.l, n) {
            return false;
        }

        for ((b, w), h) in self.buf_m.iter_mut().zip(&self.w).zip(h) {
            *b = w * h;
        }
        lp.gt_mul_into(&self.buf_m, &mut self.q);
        for (q, c) in self.q.iter_mut().zip(lp.c()) {
            *q -= c;
        }
        chol_solve(&self.l, n, &mut self.q);
        lp.g_mul_into(&self.q, &mut self.buf_m);
        let mut cq_hv = 0.0;
        for (((v, gq), h), w) in self.v.iter_mut().zip(&self.buf_m).zip(h).zip(&self.w) {
            let d = gq - h;
            cq_hv -= w * d * d;
            *v = w * d;
        }
        self.cq_hv = cq_hv;
        true
    }

    /// Solves the linearised system
    ///
    /// ```text
    ///   Gᵀdz + c dτ        = rx
    ///   G dx + ds − h dτ   = rz
    ///   dκ + cᵀdx + hᵀdz   = rt
    ///   z∘ds + s∘dz        = r_sz
    ///   κ dτ + τ dκ        = r_tk
    /// ```
    ///
    /// followed by a few rounds of iterative refinement, which matter once
    /// `z/s` spans many orders of magnitude.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &mut self,
        lp: &StandardLp,
        h: &[f64],
        it: &Iterate,
        rhs: &Rhs,
        out: &mut Direction,
    ) {
        self.solve_once(lp, h, it, rhs, out);
        if self.w_spread < REFINE_SPREAD {
            return;
        }
        let mut err = std::mem::take(&mut self.err);
        let mut corr = std::mem::take(&mut self.corr);
        for _ in 0..REFINE_STEPS {
            let size = residual(lp, h, it, rhs, out, &mut err);
            if size == 0.0 {
                break;
            }
            self.solve_once(lp, h, it, &err, &mut corr);
            for (d, c) in out.dx.iter_mut().zip(&corr.dx) {
                *d += c;
            }
            for (d, c) in out.dz.iter_mut().zip(&corr.dz) {
                *d += c;
            }
            for (d, c) in out.ds.iter_mut().zip(&corr.ds) {
                *d += c;
            }
            out.dtau += corr.dtau;
            out.dkappa += corr.dkappa;
        }
        self.err = err;
        self.corr = corr;
    }

    fn solve_once(&mut self, lp: &StandardLp, h: &[f64], it: &Iterate, rhs: &Rhs, out: &mut Direction) {
        let n = self.n;
        let (s, z) = (it.s, it.z);
        for k in 0..self.t.len() {
            self.t[k] = rhs.sz[k] / z[k] - rhs.z[k];
            self.buf_m[k] = self.w[k] * self.t[k];
        }
        lp.gt_mul_into(&self.buf_m, &mut self.buf_n);
        for j in 0..n {
            self.p[j] = rhs.x[j] - self.buf_n[j];
        }
        chol_solve(&self.l, n, &mut self.p);
        lp.g_mul_into(&self.p, &mut self.buf_m);
        for k in 0..self.u.len() {
            self.u[k] = self.w[k] * (self.buf_m[k] + self.t[k]);
        }
        let dtau = (rhs.t - rhs.tk / it.tau - dot(lp.c(), &self.p) - dot(h, &self.u))
            / (self.cq_hv - it.kappa / it.tau);
        for j in 0..n {
            out.dx[j] = self.p[j] + self.q[j] * dtau;
        }
        for k in 0..self.u.len() {
            out.dz[k] = self.u[k] + self.v[k] * dtau;
            out.ds[k] = (rhs.sz[k] - s[k] * out.dz[k]) / z[k];
        }
        out.dtau = dtau;
        out.dkappa = (rhs.tk - it.kappa * dtau) / it.tau;
    }
}

/// Right-hand side of the Newton system.
#[derive(Default)]
struct Rhs {
    x: Vec<f64>,
    z: Vec<f64>,
    t: f64,
    sz: Vec<f64>,
    tk: f64,
}

impl Rhs {
    fn new(n: usize, m: usize) -> Self {
        Self {
            x: vec![0.0; n],
            z: vec![0.0; m],
            t: 0.0,
            sz: vec![0.0; m],
            tk: 0.0,
        }
    }
}

struct Iterate<'a> {
    s: &'a [f64],
    z: &'a [f64],
    tau: f64,
    kappa: f64,
}

/// Writes `rhs − J·d` into `err` and returns its largest entry.
fn residual(lp: &StandardLp, h: &[f64], it: &Iterate, rhs: &Rhs, d: &Direction, err: &mut Rhs) -> f64 {
    let c = lp.c();
    lp.gt_mul_into(&d.dz, &mut err.x);
    for j in 0..err.x.len() {
        err.x[j] = rhs.x[j] - err.x[j] - c[j] * d.dtau;
    }
    lp.g_mul_into(&d.dx, &mut err.z);
    for k in 0..err.z.len() {
        err.z[k] = rhs.z[k] - err.z[k] - d.ds[k] + h[k] * d.dtau;
        err.sz[k] = rhs.sz[k] - it.z[k] * d.ds[k] - it.s[k] * d.dz[k];
    }
    err.t = rhs.t - d.dkappa - dot(c, &d.dx) - dot(h, &d.dz);
    err.tk = rhs.tk - it.kappa * d.dtau - it.tau * d.dkappa;
    norm_inf(&err.x)
        .max(norm_inf(&err.z))
        .max(norm_inf(&err.sz))
        .max(err.t.abs())
        .max(err.tk.abs())
}

/// In-place lower Cholesky of the symmetric matrix whose lower triangle is
/// stored in `a`. Returns `false` when a pivot is not positive.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    true
}

fn cholesky_with_shift(a: &mut [f64], n: usize) -> bool {
    let mut scale = 1.0f64;
    for i in 0..n {
        scale = scale.max(a[i * n + i].abs());
    }
    let original = a.to_vec();
    if cholesky(a, n) {
        return true;
    }
    // Near the optimum z/s spans many orders of magnitude; a tiny diagonal
    // shift restores definiteness without moving the solution measurably.
    let mut delta = 1e-14 * scale;
    for _ in 0..6 {
        a.copy_from_slice(&original);
        for i in 0..n {
            a[i * n + i] += delta;
        }
        if cholesky(a, n) {
            return true;
        }
        delta *= 100.0;
    }
    false
}

fn chol_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

fn max_step(v: &[f64], dv: &[f64], limit: f64) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .fold(limit, |a, (v, d)| a.min(-v / d))
}

fn step_to_boundary(s: &[f64], z: &[f64], tau: f64, kappa: f64, d: &Direction) -> f64 {
    let mut a = max_step(s, &d.ds, f64::INFINITY);
    a = max_step(z, &d.dz, a);
    a = max_step(&[tau, kappa], &[d.dtau, d.dkappa], a);
    a
}

pub(super) fn solve(
    lp: &StandardLp,
    h: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    let m = lp.num_rows();
    let c = lp.c();

    if m == 0 {
        // Unconstrained: optimal at any x iff c = 0.
        return Ok(if norm_inf(c) == 0.0 {
            LpSolution {
                x: vec![0.0; n],
                lambda: vec![],
                status: LpStatus::Optimal,
                kkt_residual: 0.0,
                objective: 0.0,
                iterations: 0,
            }
        } else {
            let scale = dot(c, c);
            LpSolution {
                x: c.iter().map(|v| -v / scale).collect(),
                lambda: vec![],
                status: LpStatus::Unbounded,
                kkt_residual: 0.0,
                objective: -1.0,
                iterations: 0,
            }
        });
    }

    let mut x = vec![0.0; n];
    let mut s = vec![1.0; m];
    let mut z = vec![1.0; m];
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;
    let mut last_residual = f64::INFINITY;
    let data_scale = 1.0 + norm_inf(c).max(norm_inf(h));
    let mut best = (f64::INFINITY, s.clone(), z.clone());
    let mut next_polish = POLISH_AT * data_scale;

    let mut ws = Workspace::new(n, m);
    let mut aff = Direction::new(n, m);
    let mut dir = Direction::new(n, m);
    let mut rhs = Rhs::new(n, m);
    let mut gx = vec![0.0; m];
    let mut gtz = vec![0.0; n];
    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut xh = vec![0.0; n];
    let mut zh = vec![0.0; m];

    for iter in 0..=max_iter {
        lp.g_mul_into(&x, &mut gx);
        lp.gt_mul_into(&z, &mut gtz);
        let ctx = dot(c, &x);
        let htz = dot(h, &z);
        for j in 0..n {
            rx[j] = gtz[j] + c[j] * tau;
        }
        for k in 0..m {
            rz[k] = gx[k] + s[k] - h[k] * tau;
        }
        let rt = kappa + ctx + htz;

        for j in 0..n {
            xh[j] = x[j] / tau;
        }
        for k in 0..m {
            zh[k] = z[k] / tau;
        }
        let report = KktReport::evaluate(lp, h, &xh, &zh);
        let objective = dot(c, &xh);
        last_residual = report.max();
        if report.max() <= tol && report.duality_gap <= tol * (1.0 + objective.abs()) {
            return Ok(LpSolution {
                x: xh,
                lambda: zh,
                status: LpStatus::Optimal,
                kkt_residual: report.max(),
                objective,
                iterations: iter,
            });
        }
        if report.max() < best.0 {
            best.0 = report.max();
            best.1.copy_from_slice(&s);
            best.2.copy_from_slice(&z);
            if report.max() <= next_polish {
                if let Some(v) = vertex::polish(lp, h, &s, &z, tol) {
                    return Ok(polished(v, iter));
                }
                next_polish = report.max() / POLISH_SPACING;
            }
        }
        if tau < kappa {
            if htz < 0.0 && norm_inf(&gtz) <= tol * -htz {
                return Ok(LpSolution {
                    x: vec![0.0; n],
                    lambda: z.iter().map(|v| v / -htz).collect(),
                    status: LpStatus::Infeasible,
                    kkt_residual: 0.0,
                    objective: f64::INFINITY,
                    iterations: iter,
                });
            }
            let recession = gx.iter().zip(&s).fold(0.0f64, |a, (g, s)| a.max((g + s).abs()));
            if ctx < 0.0 && recession <= tol * -ctx {
                return Ok(LpSolution {
                    x: x.iter().map(|v| v / -ctx).collect(),
                    lambda: vec![0.0; m],
                    status: LpStatus::Unbounded,
                    kkt_residual: 0.0,
                    objective: f64::NEG_INFINITY,
                    iterations: iter,
                });
            }
        }
        if iter == max_iter {
            break;
        }

        let mu = (dot(&s, &z) + tau * kappa) / (m as f64 + 1.0);
        if !ws.factor(lp, h, &s, &z) {
            return fail(lp, h, tol, &best, LpError::Numerical(iter), iter);
        }

        // Predictor: pure Newton step towards zero residuals and complementarity.
        for j in 0..n {
            rhs.x[j] = -rx[j];
        }
        for k in 0..m {
            rhs.z[k] = -rz[k];
            rhs.sz[k] = -s[k] * z[k];
        }
        rhs.t = -rt;
        rhs.tk = -tau * kappa;
        let it = Iterate { s: &s, z: &z, tau, kappa };
        ws.direction(lp, h, &it, &rhs, &mut aff);
        let a_aff = step_to_boundary(&s, &z, tau, kappa, &aff).min(1.0);
        let mut gap_aff = 0.0;
        for k in 0..m {
            gap_aff += (s[k] + a_aff * aff.ds[k]) * (z[k] + a_aff * aff.dz[k]);
        }
        gap_aff += (tau + a_aff * aff.dtau) * (kappa + a_aff * aff.dkappa);
        let mu_aff = gap_aff / (m as f64 + 1.0);
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let eta = 1.0 - sigma;

        // Corrector: centring plus the second-order Mehrotra term.
        for j in 0..n {
            rhs.x[j] = -eta * rx[j];
        }
        for k in 0..m {
            rhs.z[k] = -eta * rz[k];
            rhs.sz[k] = -s[k] * z[k] + sigma * mu - aff.ds[k] * aff.dz[k];
        }
        rhs.t = -eta * rt;
        rhs.tk = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        ws.direction(lp, h, &it, &rhs, &mut dir);

        let a_max = step_to_boundary(&s, &z, tau, kappa, &dir);
        let alpha = (STEP_FRACTION * a_max).min(1.0);
        log::trace!(
            "ipm {iter}: tau {tau:.3e} kappa {kappa:.3e} mu {mu:.3e} sigma {sigma:.2e} alpha {alpha:.3e} {report:?} spread {:.1e}",
            ws.w_spread
        );
        if !alpha.is_finite() || alpha <= 0.0 {
            return fail(lp, h, tol, &best, LpError::Numerical(iter), iter);
        }
        for (v, d) in x.iter_mut().zip(&dir.dx) {
            *v += alpha * d;
        }
        for (v, d) in s.iter_mut().zip(&dir.ds) {
            *v += alpha * d;
        }
        for (v, d) in z.iter_mut().zip(&dir.dz) {
            *v += alpha * d;
        }
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        if !(tau.is_finite() && kappa.is_finite()) {
            return fail(lp, h, tol, &best, LpError::Numerical(iter), iter);
        }
    }
    let err = LpError::MaxIterations {
        iterations: max_iter,
        residual: last_residual,
    };
    fail(lp, h, tol, &best, err, max_iter)
}

fn polished(v: vertex::Vertex, iterations: usize) -> LpSolution {
    LpSolution {
        x: v.x,
        lambda: v.lambda,
        status: LpStatus::Optimal,
        kkt_residual: v.report.max(),
        objective: v.objective,
        iterations,
    }
}

/// Last resort before reporting `err`: polish the best iterate seen.
fn fail(
    lp: &StandardLp,
    h: &[f64],
    tol: f64,
    best: &(f64, Vec<f64>, Vec<f64>),
    err: LpError,
    iterations: usize,
) -> Result<LpSolution, LpError> {
    match vertex::polish(lp, h, &best.1, &best.2, tol) {
        Some(v) => Ok(polished(v, iterations)),
        None => Err(err),
    }
}
