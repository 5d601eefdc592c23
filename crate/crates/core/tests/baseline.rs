use dpdlab::baseline::{dual_value, metropolis_weights, DualConfig, DualSubgradient};
use dpdlab::bench::{gen_basic, gen_pev};
use dpdlab::dpd::StepSchedule;
use dpdlab::graph::{ActivationModel, UnderlyingGraph};
use dpdlab::lpsolve::LpSolver;
use dpdlab::model::{box_rows, AgentModel, CoupledProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dual_config(schedule: StepSchedule) -> DualConfig {
    DualConfig {
        schedule,
        solver: LpSolver::default(),
        workers: 1,
    }
}

/// One agent, `f(x) = x` on `[0, 1]`, coupling `−x + 0.5 ≤ 0`. With no
/// neighbors the method is plain projected dual ascent, simulated here
/// directly.
#[test]
fn single_agent_follows_the_projected_recursion() {
    let (g, h) = box_rows(&[0.0], &[1.0]);
    let agent = AgentModel::new(vec![1.0], vec![], vec![vec![-1.0]], vec![-0.5], g, h).unwrap();
    let problem = CoupledProblem::new(vec![agent]).unwrap();
    let graph = UnderlyingGraph::new(1, &[]).unwrap();
    let act = ActivationModel::new(&graph, vec![], 0).unwrap();
    let alpha = 0.3;
    let mut run = DualSubgradient::new(&problem, &graph, &act, dual_config(StepSchedule::Constant(alpha))).unwrap();

    let mut lambda = 0.0f64;
    let mut xbar = 0.0;
    for t in 0..200u64 {
        // The multiplier never lands exactly on the tie at 1.
        let x = if lambda < 1.0 { 0.0 } else { 1.0 };
        lambda = (lambda + alpha * (0.5 - x)).max(0.0);
        xbar += (x - xbar) / (t + 1) as f64;

        let row = run.run_round().unwrap();
        assert!((run.state().lambda[0][0] - lambda).abs() <= 1e-9, "t {t}");
        assert!((run.state().xbar[0][0] - xbar).abs() <= 1e-9, "t {t}");
        assert!((row.cost - xbar).abs() <= 1e-9);
        assert!((row.coupling[0] - (0.5 - xbar)).abs() <= 1e-9);
        assert_eq!(row.sum_y_inf, None);
        assert!(row.agents.is_empty());
    }
    // The averages settle at the optimum x* = 0.5.
    assert!((xbar - 0.5).abs() < 0.02);
}

#[test]
fn dual_value_is_a_lower_bound() {
    let solver = LpSolver::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let basic = gen_basic(1);
    let pev = gen_pev(1, 10).unwrap();
    for (e, scale) in [(&basic, 2.0), (&pev, 0.01)] {
        let c = e.problem.centralized_reference(&solver).unwrap();
        for _ in 0..30 {
            let lambda: Vec<f64> = (0..e.problem.s_dim()).map(|_| rng.gen_range(0.0..scale)).collect();
            let q = dual_value(&e.problem, &lambda, &solver).unwrap();
            assert!(q <= c.f_star + 1e-7 * (1.0 + c.f_star.abs()), "q {q} > f* {}", c.f_star);
        }
        let q = dual_value(&e.problem, &c.mu_star, &solver).unwrap();
        assert!((q - c.f_star).abs() <= 1e-6 * (1.0 + c.f_star.abs()), "q {q} vs f* {}", c.f_star);
    }
    assert!(dual_value(&basic.problem, &[0.0], &solver).is_err());
}

#[test]
fn mixing_weights_are_doubly_stochastic() {
    let e = gen_pev(2, 20).unwrap();
    for t in 0..50 {
        let round = e.process.sample_round(t);
        let n = e.problem.n_agents();
        let mut w = vec![vec![0.0; n]; n];
        for (i, row) in w.iter_mut().enumerate() {
            let (nbrs, own) = metropolis_weights(&round, i);
            assert!(own > 0.0);
            row[i] = own;
            for (j, v) in nbrs {
                row[j] = v;
            }
        }
        for i in 0..n {
            let row: f64 = w[i].iter().sum();
            let col: f64 = w.iter().map(|r| r[i]).sum();
            assert!((row - 1.0).abs() < 1e-12 && (col - 1.0).abs() < 1e-12);
            for j in 0..n {
                assert_eq!(w[i][j], w[j][i]);
            }
        }
    }
}

#[test]
fn multipliers_stay_nonnegative() {
    let e = gen_pev(3, 20).unwrap();
    let mut run = DualSubgradient::new(&e.problem, &e.process.graph, &e.process.activation, dual_config(e.schedule)).unwrap();
    for _ in 0..50 {
        run.run_round().unwrap();
        assert!(run.state().lambda.iter().flatten().all(|l| *l >= 0.0));
    }
}
