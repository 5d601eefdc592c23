use serde::{Deserialize, Serialize};

use super::{dot, norm_inf, LpSolution, StandardLp};

/// The four KKT residuals of `min cᵀx s.t. Gx ≤ h` at a primal-dual pair,
/// each as an infinity norm, plus the absolute duality gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖c + Gᵀλ‖∞`
    pub stationarity: f64,
    /// `‖max(Gx − h, 0)‖∞`
    pub primal_feasibility: f64,
    /// `‖min(λ, 0)‖∞`
    pub dual_feasibility: f64,
    /// `max_k |λ_k (G_k x − h_k)|`
    pub complementarity: f64,
    /// `|cᵀx + hᵀλ|`, i.e. primal minus dual objective.
    pub duality_gap: f64,
}

impl KktReport {
    /// Largest of the four KKT residuals (the gap is reported separately).
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }

    pub(crate) fn evaluate(lp: &StandardLp, h: &[f64], x: &[f64], lambda: &[f64]) -> Self {
        let gx = lp.g_mul(x);
        let mut grad = lp.gt_mul(lambda);
        for (g, c) in grad.iter_mut().zip(lp.c()) {
            *g += c;
        }
        let mut primal = 0.0f64;
        let mut compl = 0.0f64;
        for ((gxk, hk), lk) in gx.iter().zip(h).zip(lambda) {
            let slack = gxk - hk;
            primal = primal.max(slack);
            compl = compl.max((lk * slack).abs());
        }
        let dual = lambda.iter().fold(0.0f64, |m, l| m.max(-l));
        Self {
            stationarity: norm_inf(&grad),
            primal_feasibility: primal,
            dual_feasibility: dual,
            complementarity: compl,
            duality_gap: (dot(lp.c(), x) + dot(h, lambda)).abs(),
        }
    }
}

/// Recomputes the KKT residuals of `sol` from scratch.
pub fn kkt_check(lp: &StandardLp, sol: &LpSolution) -> KktReport {
    KktReport::evaluate(lp, lp.h(), &sol.x, &sol.lambda)
}

/// [`kkt_check`] against a replacement right-hand side.
pub fn kkt_check_with_rhs(lp: &StandardLp, h: &[f64], sol: &LpSolution) -> KktReport {
    KktReport::evaluate(lp, h, &sol.x, &sol.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpsolve::LpStatus;

    fn sol(x: Vec<f64>, lambda: Vec<f64>) -> LpSolution {
        LpSolution {
            x,
            lambda,
            status: LpStatus::Optimal,
            kkt_residual: 0.0,
            objective: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn exact_pair_has_zero_residuals() {
        // min x s.t. -x <= 0, x <= 1  ->  x = 0, λ = (1, 0)
        let lp = StandardLp::from_rows(vec![1.0], &[vec![-1.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let r = kkt_check(&lp, &sol(vec![0.0], vec![1.0, 0.0]));
        assert_eq!(r.max(), 0.0);
        assert_eq!(r.duality_gap, 0.0);
    }

    #[test]
    fn negative_multiplier_shows_up_as_dual_infeasibility() {
        let lp = StandardLp::from_rows(vec![1.0], &[vec![-1.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let r = kkt_check(&lp, &sol(vec![0.0], vec![1.0, -0.25]));
        assert_eq!(r.dual_feasibility, 0.25);
    }

    #[test]
    fn is_idempotent() {
        let lp = StandardLp::from_rows(vec![1.0, 2.0], &[vec![-1.0, 0.5]], vec![0.3]).unwrap();
        let s = sol(vec![0.1, 0.2], vec![0.7]);
        assert_eq!(kkt_check(&lp, &s), kkt_check(&lp, &s));
    }
}
