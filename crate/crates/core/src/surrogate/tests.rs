use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checks::audit;
use super::*;
use crate::problem::{
    BoxSet, Curvature, FnCost, FullSpace, L1Regularizer, LeastSquaresCost, LinearRegularizer,
    ZeroRegularizer,
};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn quartic(dim: usize) -> Arc<dyn LocalCost> {
    Arc::new(FnCost::new(
        dim,
        |x| 0.25 * x.norm_squared().powi(2),
        |x| x * x.norm_squared(),
    ))
}

/// `Σ sin(x_k) + ¼‖x‖⁴`, nonconvex.
fn wavy(dim: usize) -> Arc<dyn LocalCost> {
    Arc::new(FnCost::new(
        dim,
        |x| x.iter().map(|t| t.sin()).sum::<f64>() + 0.25 * x.norm_squared().powi(2),
        |x| x.map(|t| t.cos()) + x * x.norm_squared(),
    ))
}

/// `log Σ exp(x_k) + ½‖x‖²`, strongly convex with modulus 1.
fn soft_max(dim: usize) -> Arc<dyn LocalCost> {
    let softmax = |x: &DVector<f64>| {
        let m = x.max();
        let e = x.map(|t| (t - m).exp());
        let s = e.sum();
        (e / s, m + s.ln())
    };
    Arc::new(
        FnCost::new(dim, move |x| softmax(x).1 + 0.5 * x.norm_squared(), move |x| softmax(x).0 + x)
            .with_hessian(move |x| {
                let p = softmax(x).0;
                DMatrix::from_diagonal(&p) - &p * p.transpose() + DMatrix::identity(x.len(), x.len())
            })
            .with_curvature(Curvature::StronglyConvex(1.0)),
    )
}

fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.5
}

fn quadratic_cost(q: DMatrix<f64>, c: DVector<f64>) -> Arc<dyn LocalCost> {
    let (q1, q2, q3) = (q.clone(), q.clone(), q.clone());
    let (c1, c2) = (c.clone(), c);
    let mu = q.clone().symmetric_eigenvalues().min();
    Arc::new(
        FnCost::new(
            q.nrows(),
            move |x| 0.5 * x.dot(&(&q1 * x)) + c1.dot(x),
            move |x| &q2 * x + &c2,
        )
        .with_hessian(move |_| q3.clone())
        .with_curvature(Curvature::StronglyConvex(mu))
        .quadratic(),
    )
}

#[test]
fn linearize_at_stationary_anchor_is_a_pure_proximal_term() {
    let s = Linearize::new(quartic(3), 1.0).unwrap();
    let a = DVector::zeros(3);
    let x = v(&[0.3, -1.0, 2.0]);
    assert_eq!(s.value(&x, &a), 0.5 * x.norm_squared());
}

#[test]
fn keep_convex_with_zero_tau_is_the_cost_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = random_spd(3, &mut rng);
    let cost = quadratic_cost(q, DVector::zeros(3));
    let s = KeepConvex::new(cost.clone(), 0.0).unwrap();
    let a = v(&[1.0, 2.0, 3.0]);
    for _ in 0..10 {
        let x = DVector::from_fn(3, |_, _| rng.random::<f64>());
        assert_eq!(s.value(&x, &a), cost.value(&x));
    }
}

#[test]
fn invalid_tau_and_structure_are_rejected() {
    assert!(matches!(
        build_surrogate(wavy(2), SurrogateKind::Linearize, 0.0),
        Err(SurrogateError::InvalidTau { .. })
    ));
    assert!(matches!(
        build_surrogate(wavy(2), SurrogateKind::KeepConvex, 1.0),
        Err(SurrogateError::NotConvex { .. })
    ));
    let convex_only: Arc<dyn LocalCost> = Arc::new(
        FnCost::new(1, |x| x[0].abs().powi(3), |x| DVector::from_element(1, 3.0 * x[0] * x[0].abs()))
            .with_curvature(Curvature::Convex),
    );
    assert!(matches!(
        build_surrogate(convex_only.clone(), SurrogateKind::KeepConvex, 0.0),
        Err(SurrogateError::InvalidTau { .. })
    ));
    assert!(matches!(
        build_surrogate(convex_only, SurrogateKind::Newton, 1.0),
        Err(SurrogateError::MissingHessian)
    ));
    assert!(matches!(
        build_surrogate(wavy(3), SurrogateKind::PartialLinearize { convex: vec![0, 1, 2] }, 1.0),
        Err(SurrogateError::InvalidBlocks(_))
    ));
    assert!(matches!(
        build_surrogate(wavy(3), SurrogateKind::BlockConvex { first: vec![0, 0] }, 1.0),
        Err(SurrogateError::InvalidBlocks(_))
    ));
    assert!(matches!(
        build_surrogate(
            wavy(3),
            SurrogateKind::BlockSeparable { blocks: vec![vec![0], vec![2]], keep_convex: false },
            1.0
        ),
        Err(SurrogateError::InvalidBlocks(_))
    ));
}

#[test]
fn newton_rejects_an_indefinite_hessian_at_the_anchor() {
    // Declared convex but x³ has a negative second derivative for x < 0.
    let cost: Arc<dyn LocalCost> = Arc::new(
        FnCost::new(1, |x| x[0].powi(3), |x| DVector::from_element(1, 3.0 * x[0] * x[0]))
            .with_hessian(|x| DMatrix::from_element(1, 1, 6.0 * x[0]))
            .with_curvature(Curvature::Convex),
    );
    let s = build_surrogate(cost, SurrogateKind::Newton, 1.0).unwrap();
    let a = v(&[-1.0]);
    let pi = v(&[0.0]);
    let line = FullSpace::new(1);
    let sub = Subproblem::new(s.as_ref(), &a, &pi, &ZeroRegularizer, &line);
    assert!(matches!(sub.solve_exact(), Err(SurrogateError::IndefiniteHessian { .. })));
    let a = v(&[1.0]);
    let sub = Subproblem::new(s.as_ref(), &a, &pi, &ZeroRegularizer, &line);
    assert!(sub.solve_exact().is_ok());
}

fn all_kinds() -> Vec<(Arc<dyn LocalCost>, SurrogateKind)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // (x₁ − x₂²)² + x₂⁴/4 is convex in x₁ only.
    let partial: Arc<dyn LocalCost> = Arc::new(FnCost::new(
        2,
        |x| (x[0] - x[1] * x[1]).powi(2) + 0.25 * x[1].powi(4),
        |x| {
            let r = x[0] - x[1] * x[1];
            v(&[2.0 * r, -4.0 * r * x[1] + x[1].powi(3)])
        },
    ));
    // (x₁x₂ − 1)² is convex in each coordinate but not jointly.
    let bilinear: Arc<dyn LocalCost> = Arc::new(FnCost::new(
        2,
        |x| (x[0] * x[1] - 1.0).powi(2),
        |x| {
            let r = x[0] * x[1] - 1.0;
            v(&[2.0 * r * x[1], 2.0 * r * x[0]])
        },
    ));
    // exp(sin x₁ + x₂²).
    let inner: Arc<dyn LocalCost> = Arc::new(FnCost::new(
        2,
        |x| x[0].sin() + x[1] * x[1],
        |x| v(&[x[0].cos(), 2.0 * x[1]]),
    ));
    let composed: Arc<dyn LocalCost> = Arc::new(FnCost::new(
        2,
        |x| (x[0].sin() + x[1] * x[1]).exp(),
        |x| {
            let e = (x[0].sin() + x[1] * x[1]).exp();
            v(&[e * x[0].cos(), e * 2.0 * x[1]])
        },
    ));
    let q = random_spd(4, &mut rng);
    vec![
        (wavy(3), SurrogateKind::Linearize),
        (soft_max(3), SurrogateKind::KeepConvex),
        (soft_max(3), SurrogateKind::Newton),
        (partial, SurrogateKind::PartialLinearize { convex: vec![0] }),
        (bilinear, SurrogateKind::BlockConvex { first: vec![0] }),
        (
            composed,
            SurrogateKind::Composition {
                outer: ScalarConvex::new(f64::exp, f64::exp),
                inner,
            },
        ),
        (
            quadratic_cost(q, v(&[0.1, -0.2, 0.3, 0.0])),
            SurrogateKind::BlockSeparable { blocks: vec![vec![0, 2], vec![1], vec![3]], keep_convex: true },
        ),
    ]
}

#[test]
fn every_kind_touches_the_cost_gradient_and_is_strongly_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (cost, kind) in all_kinds() {
        let name = kind.name();
        let set = BoxSet::uniform(cost.dim(), -1.5, 1.5);
        let s = build_surrogate(cost.clone(), kind, 0.7).unwrap();
        let r = audit(s.as_ref(), cost.as_ref(), &set, 20, &mut rng);
        assert!(r.anchor_gradient <= 1e-12, "{name}: {r:?}");
        assert!(r.anchor_gradient_fd <= 1e-7, "{name}: {r:?}");
        assert!(r.secant_slack >= -1e-10, "{name}: {r:?}");
        assert!(r.anchor_lipschitz.is_finite(), "{name}: {r:?}");
    }
}

#[test]
fn anchor_is_the_fixed_point_of_a_pure_proximal_subproblem() {
    let cost: Arc<dyn LocalCost> = Arc::new(crate::problem::ZeroCost::new(3));
    let s = Linearize::new(cost, 2.0).unwrap();
    let a = v(&[0.4, -3.0, 7.0]);
    let pi = DVector::zeros(3);
    let space = FullSpace::new(3);
    let sub = Subproblem::new(&s, &a, &pi, &ZeroRegularizer, &space);
    assert_eq!(sub.solve_exact().unwrap(), a);
}

#[test]
fn box_clamps_the_unconstrained_minimizer() {
    let cost = quadratic_cost(DMatrix::identity(1, 1), v(&[-2.0]));
    let s = KeepConvex::new(cost, 0.0).unwrap();
    let a = v(&[0.5]);
    let pi = v(&[0.0]);
    let unit = BoxSet::uniform(1, 0.0, 1.0);
    let sub = Subproblem::new(&s, &a, &pi, &ZeroRegularizer, &unit);
    assert_eq!(sub.solve_exact().unwrap()[0], 1.0);
}

#[test]
fn every_route_meets_the_minimum_principle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let set = BoxSet::uniform(3, -0.5, 0.5);
    let regs: Vec<Box<dyn Regularizer>> = vec![
        Box::new(ZeroRegularizer),
        Box::new(L1Regularizer::new(0.3)),
        Box::new(LinearRegularizer::uniform(3, 0.2)),
    ];
    let costs = [wavy(3), soft_max(3), quadratic_cost(random_spd(3, &mut rng), v(&[1.0, 0.0, -1.0]))];
    let kinds = [SurrogateKind::Linearize, SurrogateKind::KeepConvex, SurrogateKind::Newton];
    for cost in &costs {
        for kind in kinds.iter().cloned() {
            let Ok(s) = build_surrogate(cost.clone(), kind, 1.3) else { continue };
            for reg in &regs {
                for _ in 0..5 {
                    let a = crate::problem::sample_point(&set, &mut rng);
                    let pi = DVector::from_fn(3, |_, _| 4.0 * rng.random::<f64>() - 2.0);
                    let sub = Subproblem::new(s.as_ref(), &a, &pi, reg.as_ref(), &set);
                    let x = sub.solve_exact().unwrap();
                    assert!(set.contains(&x, 0.0));
                    assert!(sub.prox_residual(&x) <= 1e-10, "{} {}", s.name(), sub.prox_residual(&x));
                }
            }
        }
    }
}

#[test]
fn loose_accuracy_returns_after_one_step() {
    let s = build_surrogate(wavy(2), SurrogateKind::Linearize, 1.0).unwrap();
    let a = v(&[0.1, 0.2]);
    let pi = v(&[0.5, -0.5]);
    let unit = BoxSet::uniform(2, 0.0, 1.0);
    let sub = Subproblem::new(s.as_ref(), &a, &pi, &ZeroRegularizer, &unit);
    let r = sub.solve_inexact(1e3).unwrap();
    assert!(r.inner_iterations <= 1);
    assert!(r.accuracy_bound <= 1e3);
}

#[test]
fn tight_inexact_solve_matches_the_box_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let b = DMatrix::from_fn(6, 4, |_, _| rng.random::<f64>() - 0.5);
        let phi = DVector::from_fn(6, |_, _| 3.0 * rng.random::<f64>());
        let cost: Arc<dyn LocalCost> = Arc::new(LeastSquaresCost::new(b, phi));
        let s = KeepConvex::new(cost, 0.8).unwrap();
        let set = BoxSet::uniform(4, 0.0, 1.0);
        let a = crate::problem::sample_point(&set, &mut rng);
        let pi = DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5);
        let reg = LinearRegularizer::uniform(4, 1e-3);
        let sub = Subproblem::new(&s, &a, &pi, &reg, &set);
        let exact = sub.solve_exact().unwrap();
        let r = sub.solve_inexact(1e-10).unwrap();
        assert!(r.accuracy_bound <= 1e-10);
        assert!((&r.solution - &exact).norm() <= 1e-9);
    }
}

#[test]
fn certificate_bounds_the_true_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let set = BoxSet::uniform(3, -1.0, 1.0);
    for _ in 0..50 {
        let s = build_surrogate(soft_max(3), SurrogateKind::KeepConvex, 0.2).unwrap();
        let a = crate::problem::sample_point(&set, &mut rng);
        let pi = DVector::from_fn(3, |_, _| 6.0 * rng.random::<f64>() - 3.0);
        let reg = L1Regularizer::new(0.5);
        let sub = Subproblem::new(s.as_ref(), &a, &pi, &reg, &set);
        let exact = sub.solve_exact().unwrap();
        for eps in [1e-1, 1e-3, 1e-6] {
            let r = sub.solve_inexact(eps).unwrap();
            let err = (&r.solution - &exact).norm();
            assert!(r.accuracy_bound <= eps);
            assert!(err <= r.accuracy_bound + 1e-11, "err {err} > bound {}", r.accuracy_bound);
        }
    }
}

#[test]
fn block_solves_agree_with_the_joint_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 6;
    let q = random_spd(n, &mut rng);
    let c = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let blocks = vec![vec![0, 3], vec![1, 4, 5], vec![2]];
    for keep_convex in [true, false] {
        let s = build_surrogate(
            quadratic_cost(q.clone(), c.clone()),
            SurrogateKind::BlockSeparable { blocks: blocks.clone(), keep_convex },
            0.9,
        )
        .unwrap();
        let set = BoxSet::uniform(n, -0.3, 0.4);
        let reg = L1Regularizer::new(0.05);
        for _ in 0..20 {
            let a = crate::problem::sample_point(&set, &mut rng);
            let pi = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            let sub = Subproblem::new(s.as_ref(), &a, &pi, &reg, &set);
            let joint = sub.solve_exact().unwrap();
            let split = sub.solve_blocks().unwrap();
            assert!((&joint - &split).amax() <= 1e-10, "{joint} vs {split}");
        }
    }
}

#[test]
fn block_solve_needs_a_product_set() {
    let s = build_surrogate(
        soft_max(2),
        SurrogateKind::BlockSeparable { blocks: vec![vec![0], vec![1]], keep_convex: false },
        1.0,
    )
    .unwrap();
    let a = DVector::zeros(2);
    let ball = crate::problem::Ball::new(DVector::zeros(2), 1.0);
    let sub = Subproblem::new(s.as_ref(), &a, &a, &ZeroRegularizer, &ball);
    assert_eq!(sub.solve_blocks(), Err(SurrogateError::NotSeparable));
}
