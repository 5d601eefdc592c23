use dpdlab::bench::{gen_basic, gen_pev, gen_pev_with, PevParams};
use dpdlab::lpsolve::LpSolver;
use dpdlab::model::{AgentModel, CoupledProblem, ModelError};

/// Optimum of the basic example. Coordinates decouple; in each one every
/// agent starts at the box edge closest to its reference, and the coupling
/// surplus is removed by lowering agents in decreasing order of their
/// coupling coefficient, which is the cheapest per unit.
fn basic_f_star(refs: &[Vec<f64>], bound: f64) -> f64 {
    let s_dim = refs[0].len();
    let mut total = 0.0;
    for s in 0..s_dim {
        let mut x: Vec<f64> = refs.iter().map(|r| r[s].min(bound)).collect();
        let mut surplus: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
        for i in (0..x.len()).rev() {
            if surplus <= 0.0 {
                break;
            }
            let coef = (i + 1) as f64;
            let drop = (surplus / coef).min(x[i] + bound);
            x[i] -= drop;
            surplus -= coef * drop;
        }
        total += x.iter().zip(refs).map(|(v, r)| (v - r[s]).abs()).sum::<f64>();
    }
    total
}

fn basic_refs(problem: &CoupledProblem) -> Vec<Vec<f64>> {
    problem.agents().iter().map(|a| a.l1_terms()[0].clone()).collect()
}

#[test]
fn basic_optimum_matches_greedy_oracle() {
    let solver = LpSolver::default();
    for seed in 1..=10 {
        let e = gen_basic(seed);
        let c = e.problem.centralized_reference(&solver).unwrap();
        let oracle = basic_f_star(&basic_refs(&e.problem), 10.0);
        assert!((c.f_star - oracle).abs() <= 1e-7 * oracle, "seed {seed}: {} vs {oracle}", c.f_star);
        assert!(c.f_star > 0.0);
        assert!(c.kkt_residual <= 1e-8);
        // Agent 4 is only partly lowered, so its price sets the multiplier.
        for mu in &c.mu_star {
            assert!((mu - 0.25).abs() < 1e-7, "{mu}");
        }
        let total = e.problem.total_coupling(&c.x);
        assert!(total.iter().all(|v| *v <= 1e-7));
    }
}

#[test]
fn basic_slater_point_gives_threshold_two() {
    let solver = LpSolver::default();
    let e = gen_basic(4);
    let report = e.problem.validate_slater(&e.slater).unwrap();
    assert_eq!(report.slacks, vec![150.0; 3]);
    let mb = e.problem.m_lower_bound(&e.slater, &solver).unwrap();
    assert!((mb.gamma - 150.0).abs() < 1e-12);
    assert!((mb.threshold - 2.0).abs() < 1e-7, "{}", mb.threshold);
    for gap in &mb.gaps {
        assert!((gap - 60.0).abs() < 1e-7);
    }
    assert!(e.penalty > mb.threshold);
}

#[test]
fn slater_validation_rejects_bad_points() {
    let e = gen_basic(1);
    let mut outside = e.slater.clone();
    outside[2][0] = -11.0;
    assert_eq!(e.problem.validate_slater(&outside), Err(ModelError::NotInLocalSet(2)));
    let zero = vec![vec![0.0; 3]; 5];
    assert_eq!(e.problem.validate_slater(&zero), Err(ModelError::NotStrictlyFeasible(0)));
    assert!(matches!(e.problem.validate_slater(&zero[..4]), Err(ModelError::Dimension(_))));
}

#[test]
fn pev_agents_have_the_documented_shape() {
    let solver = LpSolver::default();
    for (seed, n) in [(1, 2), (2, 10), (3, 50), (4, 50), (5, 100)] {
        let e = gen_pev(seed, n).unwrap();
        assert_eq!(e.problem.s_dim(), 12);
        e.problem.check_local_sets(&solver).unwrap();
        for (a, x) in e.problem.agents().iter().zip(&e.slater) {
            assert_eq!(a.dim(), 12);
            assert_eq!(a.local_matrix().len(), 26);
            assert!(a.local_violation(x) <= 1e-12);
        }
        let mb = e.problem.m_lower_bound(&e.slater, &solver).unwrap();
        assert!(mb.gamma > 0.0 && mb.threshold.is_finite());
        assert!(e.penalty > mb.threshold, "seed {seed}: threshold {}", mb.threshold);
    }
}

/// Cheapest way to reach the energy target: fill the cheapest slots first.
/// Row `2T` of the local set is `−gain·Σx ≤ E_init − E_ref`.
fn pev_local_min(a: &AgentModel) -> f64 {
    let t_len = a.dim();
    let gain = -a.local_matrix()[2 * t_len][0];
    let mut need = (a.local_rhs()[2 * t_len] / -gain).max(0.0);
    let mut prices = a.linear_cost().to_vec();
    prices.sort_by(f64::total_cmp);
    let mut cost = 0.0;
    for p in prices {
        let x = need.min(1.0);
        cost += p * x;
        need -= x;
    }
    cost
}

#[test]
fn pev_with_ample_budget_decouples() {
    let solver = LpSolver::default();
    let params = PevParams {
        budget_per_vehicle: 1e3,
        ..PevParams::default()
    };
    let e = gen_pev_with(5, 8, &params).unwrap();
    let sum: f64 = e.problem.agents().iter().map(pev_local_min).sum();
    let c = e.problem.centralized_reference(&solver).unwrap();
    assert!((c.f_star - sum).abs() <= 1e-7 * (1.0 + sum.abs()), "{} vs {sum}", c.f_star);
    for a in e.problem.agents() {
        let (min, _) = a.local_minimum(&solver).unwrap();
        assert!((min - pev_local_min(a)).abs() <= 1e-7);
    }
    assert!(c.mu_star.iter().all(|m| m.abs() <= 1e-7));
}

#[test]
fn problem_json_roundtrip() {
    let e = gen_pev(1, 4).unwrap();
    let json = serde_json::to_string(&e.problem).unwrap();
    let back: CoupledProblem = serde_json::from_str(&json).unwrap();
    assert_eq!(back, e.problem);

    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["schema_version"] = 2.into();
    let err = serde_json::from_value::<CoupledProblem>(value).unwrap_err();
    assert!(err.to_string().contains("schema version"), "{err}");
}
