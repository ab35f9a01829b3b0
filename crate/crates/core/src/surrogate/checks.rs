//! Sampled checks of the surrogate properties.

use nalgebra::DVector;
use rand::Rng;

use super::Surrogate;
use crate::problem::checks::finite_difference_gradient;
use crate::problem::{sample_point, FeasibleSet, LocalCost};

/// Worst values seen by [`audit`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SurrogateAudit {
    /// `max ‖∇f̃(a; a) − ∇f(a)‖ / (1 + ‖∇f(a)‖)` with the analytic surrogate gradient.
    pub anchor_gradient: f64,
    /// Same, with a finite-difference surrogate gradient.
    pub anchor_gradient_fd: f64,
    /// `min f̃(x) + f̃(y) − 2 f̃((x + y)/2) − (μ/4) ‖x − y‖²`.
    pub secant_slack: f64,
    /// `max ‖∇f̃(x; a) − ∇f̃(x; b)‖ / ‖a − b‖` over sampled triples.
    pub anchor_lipschitz: f64,
}

pub fn anchor_gradient_error(s: &dyn Surrogate, cost: &dyn LocalCost, a: &DVector<f64>) -> f64 {
    let g = cost.gradient(a);
    (s.gradient(a, a) - &g).norm() / (1.0 + g.norm())
}

pub fn anchor_gradient_error_fd(s: &dyn Surrogate, cost: &dyn LocalCost, a: &DVector<f64>) -> f64 {
    let g = cost.gradient(a);
    let fd = finite_difference_gradient(|x| s.value(x, a), a, 1e-5);
    (fd - &g).norm() / (1.0 + g.norm())
}

/// `f̃(x) + f̃(y) − 2 f̃(m) − (μ/4) ‖x − y‖²` at anchor `a`; nonnegative for a
/// surrogate that is strongly convex with modulus `μ`.
pub fn secant_slack(s: &dyn Surrogate, a: &DVector<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let m = (x + y) * 0.5;
    s.value(x, a) + s.value(y, a) - 2.0 * s.value(&m, a) - 0.25 * s.modulus() * (x - y).norm_squared()
}

/// Samples `anchors` anchors from `K` and, at each, checks the gradient identity
/// and the secant inequality on a random pair.
pub fn audit(
    s: &dyn Surrogate,
    cost: &dyn LocalCost,
    set: &dyn FeasibleSet,
    anchors: usize,
    rng: &mut impl Rng,
) -> SurrogateAudit {
    let mut out = SurrogateAudit {
        secant_slack: f64::INFINITY,
        ..Default::default()
    };
    for _ in 0..anchors {
        let a = sample_point(set, rng);
        let x = sample_point(set, rng);
        let y = sample_point(set, rng);
        let b = sample_point(set, rng);
        out.anchor_gradient = out.anchor_gradient.max(anchor_gradient_error(s, cost, &a));
        out.anchor_gradient_fd = out.anchor_gradient_fd.max(anchor_gradient_error_fd(s, cost, &a));
        out.secant_slack = out.secant_slack.min(secant_slack(s, &a, &x, &y));
        let gap = (&a - &b).norm();
        if gap > 0.0 {
            let q = (s.gradient(&x, &a) - s.gradient(&x, &b)).norm() / gap;
            out.anchor_lipschitz = out.anchor_lipschitz.max(q);
        }
    }
    out
}
