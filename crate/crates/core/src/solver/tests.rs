use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{generate_b_connected_schedule, Digraph, GraphSchedule, WeightMatrix};
use crate::problem::{
    BoxSet, DistributedProblem, FeasibleSet, FnCost, FullSpace, LocalCost, ZeroRegularizer,
};
use crate::surrogate::{build_surrogate, Linearize, Surrogate, SurrogateKind};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// `½‖x − c‖²` scaled by `w`.
fn well(c: DVector<f64>, w: f64) -> Arc<dyn LocalCost> {
    let c2 = c.clone();
    Arc::new(
        FnCost::new(c.len(), move |x| 0.5 * w * (x - &c).norm_squared(), move |x| (x - &c2) * w)
            .with_curvature(crate::problem::Curvature::StronglyConvex(w)),
    )
}

/// `Σ_k cos(x_k + s)`, nonconvex.
fn ripple(dim: usize, s: f64) -> Arc<dyn LocalCost> {
    Arc::new(FnCost::new(
        dim,
        move |x| x.iter().map(|t| (t + s).cos()).sum(),
        move |x| x.map(|t| -(t + s).sin()),
    ))
}

fn problem(costs: Vec<Arc<dyn LocalCost>>, set: Arc<dyn FeasibleSet>) -> DistributedProblem {
    DistributedProblem::new(costs, Arc::new(ZeroRegularizer), set).unwrap()
}

fn linearized(p: &DistributedProblem, tau: f64) -> Vec<Arc<dyn Surrogate>> {
    p.costs()
        .iter()
        .map(|c| build_surrogate(c.clone(), SurrogateKind::Linearize, tau).unwrap())
        .collect()
}

#[test]
fn singleton_network_is_centralized_sca() {
    let p = problem(vec![ripple(2, 0.3)], Arc::new(BoxSet::uniform(2, -1.0, 1.0)));
    let s = linearized(&p, 2.0);
    let x0 = v(&[0.2, -0.7]);
    let st = NetworkState::initialize(&p, vec![x0.clone()]);
    assert_eq!(st.agents[0].pi, DVector::zeros(2));
    let alpha = 0.4;
    let next = next_step(&p, &st, &WeightMatrix::identity(1), alpha, &s, None, 0, false).unwrap();
    let g = p.cost(0).gradient(&x0);
    let xt = p.feasible().project(&(&x0 - &g / 2.0));
    let expected = &x0 + (xt - &x0) * alpha;
    assert!((&next.agents[0].x - &expected).amax() < 1e-15);
    assert!((&next.agents[0].y - p.cost(0).gradient(&expected)).amax() < 1e-15);
    assert!(next.agents[0].pi.amax() < 1e-15);
}

#[test]
fn common_stationary_point_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let centers: Vec<DVector<f64>> = (0..5).map(|_| DVector::from_fn(3, |_, _| rng.random())).collect();
    // Σ ½‖x − c_i‖² is minimized at the mean of the centers.
    let star = crate::util::mean(&centers);
    let p = problem(centers.into_iter().map(|c| well(c, 1.0)).collect(), Arc::new(FullSpace::new(3)));
    let s = linearized(&p, 1.5);
    let mut st = NetworkState::initialize(&p, vec![star.clone(); 5]);
    // Trackers at the network average, which vanishes at the stationary point.
    let y_bar = p.sum_gradient(&star) / 5.0;
    for a in &mut st.agents {
        a.y = y_bar.clone();
        a.pi = &y_bar * 5.0 - &a.grad;
    }
    let sched = GraphSchedule::constant(Digraph::ring(5).unwrap()).unwrap();
    let next = next_step(&p, &st, sched.weights(0), 0.3, &s, None, 0, false).unwrap();
    for (a, b) in st.agents.iter().zip(&next.agents) {
        assert!((&a.x - &b.x).amax() < 1e-12);
        assert!((&a.y - &b.y).amax() < 1e-12);
    }
}

#[test]
fn zero_step_only_mixes() {
    let p = problem((0..4).map(|k| ripple(2, k as f64)).collect(), Arc::new(FullSpace::new(2)));
    let s = linearized(&p, 1.0);
    let sched = GraphSchedule::constant(Digraph::ring(4).unwrap()).unwrap();
    let common = v(&[0.5, -0.5]);
    let st = NetworkState::initialize(&p, vec![common.clone(); 4]);
    let next = next_step(&p, &st, sched.weights(0), 0.0, &s, None, 0, false).unwrap();
    for a in &next.agents {
        assert_eq!(a.x, common);
    }
    // Trackers start at the local gradients, so mixing moves them but keeps the mean.
    let (gap, _) = next.conservation_gap(&p);
    assert!(gap < 1e-15);
}

#[test]
fn tracker_mean_equals_gradient_mean_on_a_time_varying_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let agents = 6;
    let costs: Vec<_> = (0..agents).map(|k| ripple(3, rng.random::<f64>() * k as f64)).collect();
    let p = problem(costs, Arc::new(BoxSet::uniform(3, -2.0, 2.0)));
    let base = Digraph::erdos_renyi(agents, 0.5, 7).unwrap();
    let sched = generate_b_connected_schedule(&base, 3, 30, 11).unwrap();
    let mut cfg = RunConfig::new(0, StepSizeRule::Recursive { alpha0: 0.5, mu: 0.01 });
    cfg.seed = 5;
    let mut r = Runner::new(&p, &sched, Algorithm::Next { surrogates: linearized(&p, 3.0), inexact: None }, cfg)
        .unwrap();
    for _ in 0..300 {
        r.step().unwrap();
        let (gap, scale) = r.state().conservation_gap(&p);
        assert!(gap <= 1e-9 * (1.0 + scale), "n={} gap={gap}", r.iteration());
    }
}

#[test]
fn gradient_consensus_on_one_agent_is_projected_gradient() {
    let p = problem(vec![well(v(&[3.0, -3.0]), 1.0)], Arc::new(BoxSet::uniform(2, -1.0, 1.0)));
    let st = NetworkState::initialize(&p, vec![v(&[0.0, 0.5])]);
    let next = dgradient_step(&p, &st, &WeightMatrix::identity(1), 0.5, false);
    assert_eq!(next.agents[0].x, v(&[1.0, -1.0]));
}

#[test]
fn zero_step_gradient_consensus_averages() {
    let p = problem((0..3).map(|k| ripple(1, k as f64)).collect(), Arc::new(FullSpace::new(1)));
    let st = NetworkState::initialize(&p, vec![v(&[0.0]), v(&[3.0]), v(&[6.0])]);
    let w = crate::graph::metropolis_weights(&Digraph::complete(3).unwrap(), true).unwrap();
    let next = dgradient_step(&p, &st, &w, 0.0, false);
    for a in &next.agents {
        assert!((a.x[0] - 3.0).abs() < 1e-15);
    }
}

#[test]
fn linearized_subproblem_is_a_projected_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sets: Vec<Arc<dyn FeasibleSet>> = vec![
        Arc::new(FullSpace::new(3)),
        Arc::new(BoxSet::uniform(3, -10.0, 10.0)),
        Arc::new(BoxSet::uniform(3, -0.2, 0.3)),
    ];
    for set in sets {
        let p = problem(vec![ripple(3, 0.1), ripple(3, 0.7)], set.clone());
        for _ in 0..100 {
            let x = crate::problem::sample_point(set.as_ref(), &mut rng);
            let mut st = NetworkState::initialize(&p, vec![x.clone(), x]);
            st.agents[0].pi = DVector::from_fn(3, |_, _| 4.0 * rng.random::<f64>() - 2.0);
            assert!(next_l_equivalence_check(&p, 0, &st.agents[0], 1.7));
        }
    }
}

#[test]
fn zero_iterations_give_one_row() {
    let p = problem(vec![ripple(2, 0.0), ripple(2, 1.0)], Arc::new(BoxSet::uniform(2, 0.0, 1.0)));
    let sched = GraphSchedule::constant(Digraph::complete(2).unwrap()).unwrap();
    let t = run(&p, &sched, Algorithm::DGradient, RunConfig::new(0, StepSizeRule::Constant(0.1))).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].n, 0);
    assert_eq!(t.rows[0].track_err, None);
}

#[test]
fn runs_are_deterministic_and_parallel_safe() {
    let p = problem((0..5).map(|k| ripple(2, 0.4 * k as f64)).collect(), Arc::new(BoxSet::uniform(2, -1.0, 2.0)));
    let sched = generate_b_connected_schedule(&Digraph::ring(5).unwrap(), 2, 10, 1).unwrap();
    let go = |parallel: bool| {
        let mut cfg = RunConfig::new(50, StepSizeRule::Recursive { alpha0: 0.5, mu: 0.01 });
        cfg.seed = 9;
        cfg.parallel = parallel;
        cfg.cadence = 7;
        run(&p, &sched, Algorithm::Next { surrogates: linearized(&p, 2.0), inexact: None }, cfg).unwrap()
    };
    let a = go(false);
    let b = go(false);
    let c = go(true);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows, c.rows);
    let ns: Vec<usize> = a.rows.iter().map(|r| r.n).collect();
    assert_eq!(ns, vec![0, 7, 14, 21, 28, 35, 42, 49, 50]);
    assert!(a.rows.iter().all(|r| r.comm == 2 * r.n));
}

#[test]
fn non_finite_states_abort() {
    let bad: Arc<dyn LocalCost> = Arc::new(FnCost::new(
        1,
        |x| x[0],
        |x| DVector::from_element(1, if x[0] > 0.5 { f64::NAN } else { -1.0 }),
    ));
    let p = problem(vec![bad], Arc::new(FullSpace::new(1)));
    let sched = GraphSchedule::constant(Digraph::empty(1).unwrap()).unwrap();
    let mut cfg = RunConfig::new(100, StepSizeRule::Constant(0.5));
    cfg.initial = Some(vec![v(&[0.0])]);
    let err = run(&p, &sched, Algorithm::DGradient, cfg).unwrap_err();
    assert!(matches!(err, SolverError::NonFinite { agent: 0, .. }), "{err}");
}

#[test]
fn mismatched_configuration_is_rejected() {
    let p = problem(vec![ripple(2, 0.0), ripple(2, 1.0)], Arc::new(FullSpace::new(2)));
    let sched = GraphSchedule::constant(Digraph::ring(3).unwrap()).unwrap();
    let cfg = RunConfig::new(1, StepSizeRule::Constant(0.1));
    assert!(matches!(run(&p, &sched, Algorithm::DGradient, cfg), Err(SolverError::Config(_))));
    let sched = GraphSchedule::constant(Digraph::complete(2).unwrap()).unwrap();
    let cfg = RunConfig::new(1, StepSizeRule::Polynomial { alpha0: 1.0, beta: 0.3 });
    assert!(matches!(run(&p, &sched, Algorithm::DGradient, cfg), Err(SolverError::Step(_))));
    let cfg = RunConfig::new(1, StepSizeRule::Constant(0.1));
    let alg = Algorithm::Next {
        surrogates: linearized(&p, 1.0),
        inexact: Some(InexactSchedule::uniform(2, 1.0)),
    };
    assert!(matches!(run(&p, &sched, alg, cfg), Err(SolverError::Step(StepError::EpsNotSummable))));
}

#[test]
fn strongly_convex_sum_converges_to_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let centers: Vec<DVector<f64>> = (0..6).map(|_| DVector::from_fn(2, |_, _| rng.random())).collect();
    let star = crate::util::mean(&centers);
    let p = problem(centers.into_iter().map(|c| well(c, 1.0)).collect(), Arc::new(FullSpace::new(2)));
    let sched = generate_b_connected_schedule(&Digraph::ring(6).unwrap(), 2, 20, 3).unwrap();
    let mut cfg = RunConfig::new(2000, StepSizeRule::Recursive { alpha0: 0.5, mu: 0.001 });
    cfg.stop_threshold = Some(1e-10);
    let surrogates: Vec<Arc<dyn Surrogate>> =
        p.costs().iter().map(|c| Arc::new(Linearize::new(c.clone(), 2.0).unwrap()) as Arc<dyn Surrogate>).collect();
    let t = run(&p, &sched, Algorithm::Next { surrogates, inexact: None }, cfg).unwrap();
    assert!(t.stopped_early, "final J {}", t.last().j);
    assert!((t.final_state.x_bar() - star).amax() < 1e-9);
}

#[test]
fn inexact_solves_still_track_conservation() {
    let p = problem((0..4).map(|k| ripple(2, k as f64)).collect(), Arc::new(BoxSet::uniform(2, -1.0, 1.0)));
    let sched = GraphSchedule::constant(Digraph::ring(4).unwrap()).unwrap();
    let surrogates: Vec<Arc<dyn Surrogate>> = p
        .costs()
        .iter()
        .map(|c| build_surrogate(c.clone(), SurrogateKind::Linearize, 2.0).unwrap())
        .collect();
    let cfg = RunConfig::new(0, StepSizeRule::Polynomial { alpha0: 0.5, beta: 0.75 });
    let alg = Algorithm::Next { surrogates, inexact: Some(InexactSchedule::uniform(4, 1.0)) };
    let mut r = Runner::new(&p, &sched, alg, cfg).unwrap();
    for _ in 0..100 {
        r.step().unwrap();
        let (gap, scale) = r.state().conservation_gap(&p);
        assert!(gap <= 1e-9 * (1.0 + scale));
    }
}
