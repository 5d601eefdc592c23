mod common;

use dpdlab::bench::{gen_basic, Experiment};
use dpdlab::blocksub::{
    block_subgradient, lift, local_subproblems, p_tilde, pi_matrix, project_down, BlockMethod, BlockVector, SubgradientBound,
    WeightedNorm,
};
use dpdlab::dpd::{AllocationState, Dpd, DpdConfig, StepSchedule};
use dpdlab::graph::{erdos_renyi_connected, EdgeActivation, RecordedActivation};
use dpdlab::lpsolve::LpSolver;
use dpdlab::model::CoupledProblem;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_z(rng: &mut impl Rng, blocks: usize, s_dim: usize, scale: f64) -> BlockVector {
    let data = (0..2 * blocks * s_dim).map(|_| rng.gen_range(-scale..scale)).collect();
    BlockVector::from_flat(blocks, s_dim, data).unwrap()
}

fn config(e: &Experiment, schedule: StepSchedule) -> DpdConfig {
    DpdConfig {
        penalty: e.penalty,
        schedule,
        solver: LpSolver::default(),
        workers: 1,
    }
}

#[test]
fn projection_is_zero_sum_and_matches_the_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.gen_range(2..=12);
        let g = erdos_renyi_connected(n, 0.4, &mut rng, 10_000).unwrap();
        let s_dim = rng.gen_range(1..=3);
        let z = random_z(&mut rng, g.num_edges(), s_dim, 50.0);
        let y = project_down(&z, &g);
        for s in 0..s_dim {
            assert!(y.iter().map(|v| v[s]).sum::<f64>().abs() <= 1e-10);
        }
        let dense = pi_matrix(&g, s_dim) * DVector::from_column_slice(z.as_slice());
        let flat: Vec<f64> = y.concat();
        for (a, b) in dense.iter().zip(&flat) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn lift_is_the_minimum_norm_preimage() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.gen_range(2..=10);
        let g = erdos_renyi_connected(n, 0.5, &mut rng, 10_000).unwrap();
        let s_dim = rng.gen_range(1..=3);
        let mut y: Vec<Vec<f64>> = (0..n).map(|_| (0..s_dim).map(|_| rng.gen_range(-20.0..20.0)).collect()).collect();
        for s in 0..s_dim {
            let mean = y.iter().map(|v| v[s]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| v[s] -= mean);
        }
        let z = lift(&y, &g).unwrap();
        for (a, b) in project_down(&z, &g).iter().flatten().zip(y.iter().flatten()) {
            assert!((a - b).abs() <= 1e-9);
        }
        // Orthogonal to the kernel of Π: every block is antisymmetric, so it
        // has no part along `z_ij = z_ji`, and the flows `z_ij − z_ji` are
        // potential differences, so they have no part along any cycle.
        let incidence = g.incidence_matrix();
        for s in 0..s_dim {
            let mut augmented: Vec<Vec<f64>> = Vec::new();
            for l in 0..g.num_edges() {
                let (zij, zji) = z.block(l).split_at(s_dim);
                assert!((zij[s] + zji[s]).abs() <= 1e-12 * (1.0 + zij[s].abs()));
                let mut row: Vec<f64> = (0..n).map(|i| incidence[(l, i)] as f64).collect();
                row.push(zij[s] - zji[s]);
                augmented.push(row);
            }
            assert_eq!(common::rank(augmented), n - 1);
        }
    }
}

#[test]
fn weighted_norm_matches_its_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sigma = vec![0.5, 0.6, 0.4, 0.7];
    let norm = WeightedNorm::new(sigma.clone()).unwrap();
    let w = norm.matrix(3);
    for _ in 0..100 {
        let theta = random_z(&mut rng, 4, 3, 10.0);
        let by_hand: f64 = (0..4)
            .map(|l| theta.block(l).iter().map(|v| v * v).sum::<f64>() / sigma[l])
            .sum();
        let v = DVector::from_column_slice(theta.as_slice());
        let quad = (v.transpose() * &w * &v)[(0, 0)];
        assert!((norm.norm_sq(&theta) - by_hand).abs() <= 1e-12 * by_hand);
        assert!((quad - by_hand).abs() <= 1e-12 * by_hand);
    }
}

/// An activation source read at rounds shifted by a fixed offset.
struct Shifted<'a> {
    inner: &'a dyn EdgeActivation,
    offset: u64,
}

impl EdgeActivation for Shifted<'_> {
    fn is_active(&self, edge: usize, t: u64) -> bool {
        self.inner.is_active(edge, t + self.offset)
    }
}

#[test]
fn expected_update_is_the_probability_weighted_step() {
    let e = gen_basic(1);
    let g = &e.process.graph;
    let solver = LpSolver::default();
    let z0 = lift(&[vec![30.0; 3], vec![-10.0; 3], vec![5.0; 3], vec![-40.0; 3], vec![15.0; 3]], g).unwrap();
    let subs = local_subproblems(&e.problem, e.penalty).unwrap();
    let (grad, _) = block_subgradient(&z0, g, &subs, &solver).unwrap();
    let alpha = 0.1;
    let rounds = 10_000u64;
    let mut mean = vec![0.0; z0.as_slice().len()];
    for offset in 0..rounds {
        let act = Shifted {
            inner: &e.process.activation,
            offset,
        };
        let mut m = BlockMethod::new(&e.problem, g, &act, config(&e, StepSchedule::Constant(alpha)), z0.clone()).unwrap();
        m.run_round().unwrap();
        for (acc, d) in mean.iter_mut().zip(m.state().z.sub(&z0).as_slice()) {
            *acc += d / rounds as f64;
        }
    }
    let sigma = e.process.activation.probabilities();
    let width = 2 * e.problem.s_dim();
    let mut checked = 0;
    for (k, m) in mean.iter().enumerate() {
        let step = -alpha * grad.as_slice()[k];
        if step.abs() < 1e-9 {
            assert!(m.abs() < 1e-12);
            continue;
        }
        let ratio = m / step;
        assert!((ratio - sigma[k / width]).abs() < 0.05, "entry {k}: {ratio} vs {}", sigma[k / width]);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn subgradient_blocks_are_bounded_and_valid() {
    let e = gen_basic(2);
    let g = &e.process.graph;
    let solver = LpSolver::default();
    let subs = local_subproblems(&e.problem, e.penalty).unwrap();
    let s_dim = e.problem.s_dim();
    let bound = SubgradientBound::from_penalty(s_dim, e.penalty, e.process.activation.probabilities());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let z = random_z(&mut rng, g.num_edges(), s_dim, 30.0);
        let (grad, sols) = block_subgradient(&z, g, &subs, &solver).unwrap();
        let p = p_tilde(&z, g, &subs, &solver).unwrap();
        assert!((p - sols.iter().map(|s| s.p_value).sum::<f64>()).abs() <= 1e-12 * (1.0 + p.abs()));
        for l in 0..g.num_edges() {
            let norm = grad.block(l).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= bound.per_block[l] + 1e-8);
        }
        for _ in 0..10 {
            let z2 = random_z(&mut rng, g.num_edges(), s_dim, 30.0);
            let p2 = p_tilde(&z2, g, &subs, &solver).unwrap();
            let lin: f64 = grad.as_slice().iter().zip(z2.sub(&z).as_slice()).map(|(a, b)| a * b).sum();
            assert!(p2 >= p + lin - 1e-7 * (1.0 + p.abs()), "{p2} < {p} + {lin}");
        }
    }
}

#[test]
fn p_tilde_sums_the_local_values() {
    let e = gen_basic(3);
    let g = &e.process.graph;
    let solver = LpSolver::default();
    let subs = local_subproblems(&e.problem, e.penalty).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = random_z(&mut rng, g.num_edges(), 3, 20.0);
    let y = project_down(&z, g);
    let direct: f64 = subs.iter().zip(&y).map(|(s, y)| s.solve(y, &solver).unwrap().p_value).sum();
    assert_eq!(p_tilde(&z, g, &subs, &solver).unwrap(), direct);
}

#[test]
fn identical_agents_at_equal_allocations_have_zero_subgradient() {
    let e = gen_basic(1);
    let g = &e.process.graph;
    let agent = e.problem.agents()[2].clone();
    let problem = CoupledProblem::new(vec![agent; 5]).unwrap();
    let solver = LpSolver::default();
    let subs = local_subproblems(&problem, e.penalty).unwrap();
    let z = BlockVector::zeros(g.num_edges(), 3);
    let (grad, _) = block_subgradient(&z, g, &subs, &solver).unwrap();
    assert!(grad.as_slice().iter().all(|v| v.abs() <= 1e-12));

    let mut m = BlockMethod::new(&problem, g, &e.process.activation, config(&e, e.schedule), z.clone()).unwrap();
    for _ in 0..20 {
        m.run_round().unwrap();
    }
    assert!(m.state().z.as_slice().iter().all(|v| v.abs() <= 1e-12));
}

#[test]
fn nothing_moves_without_active_edges() {
    let e = gen_basic(1);
    let g = &e.process.graph;
    let silent = RecordedActivation { rounds: vec![] };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z0 = random_z(&mut rng, g.num_edges(), 3, 20.0);
    let mut m = BlockMethod::new(&e.problem, g, &silent, config(&e, e.schedule), z0.clone()).unwrap();
    let y0 = AllocationState::new(project_down(&z0, g)).unwrap();
    let mut d = Dpd::new(&e.problem, g, &silent, config(&e, e.schedule), y0.clone()).unwrap();
    for _ in 0..10 {
        assert_eq!(m.run_round().unwrap().trace.active_edges, 0);
        d.run_round().unwrap();
    }
    assert_eq!(m.state().z, z0);
    assert_eq!(d.allocations(), y0.y);
}
