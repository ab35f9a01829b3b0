//! Spot checks for the assumptions a problem has to satisfy. None of these are
//! proofs; they sample points and report the worst violation seen.

use nalgebra::DVector;
use rand::Rng;

use super::{sample_point, FeasibleSet, LocalCost, Regularizer};

/// Central-difference gradient with step `h_scale · (1 + ‖x‖)`.
pub fn finite_difference_gradient(
    f: impl Fn(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    h_scale: f64,
) -> DVector<f64> {
    let h = h_scale * (1.0 + x.norm());
    DVector::from_fn(x.len(), |k, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

/// `‖∇f(x) − FD(x)‖_∞ / (1 + ‖∇f(x)‖_∞)`.
pub fn gradient_error(cost: &dyn LocalCost, x: &DVector<f64>) -> f64 {
    let g = cost.gradient(x);
    let fd = finite_difference_gradient(|p| cost.value(p), x, 1e-6);
    (&g - fd).amax() / (1.0 + g.amax())
}

/// Largest relative finite-difference mismatch over `samples` random points of `K`.
pub fn worst_gradient_error(
    cost: &dyn LocalCost,
    set: &dyn FeasibleSet,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    (0..samples)
        .map(|_| gradient_error(cost, &sample_point(set, rng)))
        .fold(0.0, f64::max)
}

/// Largest violation of midpoint convexity and of the subgradient inequality
/// over random pairs. Non-positive means no violation was observed.
pub fn worst_regularizer_violation(
    reg: &dyn Regularizer,
    set: &dyn FeasibleSet,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let a = sample_point(set, rng);
        let b = sample_point(set, rng);
        let t: f64 = rng.random();
        let mix = &a * t + &b * (1.0 - t);
        let convexity = reg.value(&mix) - (t * reg.value(&a) + (1.0 - t) * reg.value(&b));
        let sub = reg.value(&a) + reg.subgradient(&a).dot(&(&b - &a)) - reg.value(&b);
        worst = worst.max(convexity).max(sub);
    }
    worst
}

/// Largest violation of projection idempotence and nonexpansiveness over
/// random pairs drawn around `K`.
pub fn worst_projection_violation(
    set: &dyn FeasibleSet,
    samples: usize,
    spread: f64,
    rng: &mut impl Rng,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let n = set.dim();
    for _ in 0..samples {
        let a = DVector::from_fn(n, |_, _| spread * (2.0 * rng.random::<f64>() - 1.0));
        let b = DVector::from_fn(n, |_, _| spread * (2.0 * rng.random::<f64>() - 1.0));
        let pa = set.project(&a);
        let pb = set.project(&b);
        let idem = (set.project(&pa) - &pa).amax();
        let expand = (&pa - &pb).norm() - (&a - &b).norm();
        worst = worst.max(idem).max(expand);
    }
    worst
}
