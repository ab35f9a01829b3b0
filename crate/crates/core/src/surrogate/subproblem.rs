use nalgebra::DVector;
use rayon::prelude::*;

use super::{box_qp, gather, QuadraticHessian, Surrogate, SurrogateError};
use crate::problem::{FeasibleSet, Regularizer};
use crate::util::all_finite;

/// Relative accuracy the exact solver aims for when no closed form applies.
pub const EXACT_TOL: f64 = 1e-12;

const MAX_INNER: usize = 200_000;

/// Output of an inexact solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    /// Certified upper bound on the distance to the exact minimizer.
    pub accuracy_bound: f64,
    pub inner_iterations: usize,
}

/// `min_{x ∈ K} f̃(x; a) + π̃ᵀ(x − a) + G(x)`.
#[derive(Clone, Copy)]
pub struct Subproblem<'a> {
    pub surrogate: &'a dyn Surrogate,
    pub anchor: &'a DVector<f64>,
    pub pi: &'a DVector<f64>,
    pub regularizer: &'a dyn Regularizer,
    pub feasible: &'a dyn FeasibleSet,
}

impl<'a> Subproblem<'a> {
    pub fn new(
        surrogate: &'a dyn Surrogate,
        anchor: &'a DVector<f64>,
        pi: &'a DVector<f64>,
        regularizer: &'a dyn Regularizer,
        feasible: &'a dyn FeasibleSet,
    ) -> Self {
        Self {
            surrogate,
            anchor,
            pi,
            regularizer,
            feasible,
        }
    }

    /// `f̃(x; a) + π̃ᵀ(x − a)`.
    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        self.surrogate.value(x, self.anchor) + self.pi.dot(&(x - self.anchor))
    }

    pub fn smooth_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.surrogate.gradient(x, self.anchor) + self.pi
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.regularizer.value(x)
    }

    fn prox(&self, v: &DVector<f64>, gamma: f64) -> DVector<f64> {
        self.regularizer.prox(v, gamma, self.feasible)
    }

    /// `‖x − prox_{G + ι_K}(x − ∇s(x))‖` with unit step, where `s` is the
    /// smooth part. Zero exactly at the minimizer.
    pub fn prox_residual(&self, x: &DVector<f64>) -> f64 {
        (x - self.prox(&(x - self.smooth_gradient(x)), 1.0)).norm()
    }

    /// One prox-gradient step from `y` with step `gamma`, and a certified
    /// bound on the distance from its output to the minimizer.
    ///
    /// With `x⁺ = prox_{γ(G + ι_K)}(y − γ∇s(y))`, the vector
    /// `v = (y − x⁺)/γ − ∇s(y) + ∇s(x⁺)` is a subgradient of the subproblem
    /// objective at `x⁺`. Strong convexity with modulus `μ` then gives
    /// `‖x⁺ − x̃‖ ≤ ‖v‖ / μ`.
    pub fn certified_step(&self, y: &DVector<f64>, gamma: f64) -> (DVector<f64>, f64) {
        let gy = self.smooth_gradient(y);
        let xp = self.prox(&(y - &gy * gamma), gamma);
        let v = (y - &xp) / gamma - gy + self.smooth_gradient(&xp);
        let bound = v.norm() / self.surrogate.modulus();
        (xp, bound)
    }

    /// Minimizer via the cheapest exact route available: a closed form from the
    /// surrogate, a scaled-identity prox, a box QP, or the iterative solver run
    /// to machine-level accuracy.
    pub fn solve_exact(&self) -> Result<DVector<f64>, SurrogateError> {
        self.surrogate.validate_anchor(self.anchor)?;
        if let Some(x) =
            self.surrogate
                .best_response(self.anchor, self.pi, self.regularizer, self.feasible)
        {
            return finite(x);
        }
        if let Some(q) = self.surrogate.quadratic(self.anchor) {
            match q.hessian {
                QuadraticHessian::ScaledIdentity(c) => {
                    let v = self.anchor - (&q.gradient + self.pi) / c;
                    return finite(self.prox(&v, 1.0 / c));
                }
                QuadraticHessian::Dense(h) => {
                    let lin = self.regularizer.linear_part(self.anchor.len());
                    if let (true, Some(c)) = (self.feasible.coordinatewise(), lin) {
                        let (lo, up) = self.feasible.bounding_box();
                        let qv = &q.gradient + self.pi + c;
                        if let Some(d) = box_qp(&h, &qv, &(lo - self.anchor), &(up - self.anchor)) {
                            return finite(self.feasible.project(&(self.anchor + d)));
                        }
                    }
                }
            }
        }
        let scale = 1.0 + self.anchor.norm();
        self.solve_iterative(EXACT_TOL * scale, None, true)
            .map(|r| r.solution)
    }

    /// A point certified within `eps` of the minimizer, computed by the
    /// iterative solver started at the anchor.
    pub fn solve_inexact(&self, eps: f64) -> Result<SolveReport, SurrogateError> {
        assert!(eps > 0.0, "accuracy must be positive");
        self.surrogate.validate_anchor(self.anchor)?;
        self.solve_iterative(eps, None, false)
    }

    /// Accelerated proximal gradient with backtracking and function-value
    /// restart, stopped once the certificate of [`Self::certified_step`] drops
    /// below `tol`. With `floor` set, a tolerance below the rounding floor of
    /// the certificate is raised to that floor instead of failing.
    pub fn solve_iterative(
        &self,
        tol: f64,
        start: Option<&DVector<f64>>,
        floor: bool,
    ) -> Result<SolveReport, SurrogateError> {
        let mu = self.surrogate.modulus();
        let mut lip = self
            .surrogate
            .smoothness(self.anchor)
            .filter(|l| l.is_finite() && *l > 0.0)
            .unwrap_or(mu.max(1e-12));
        let mut x = self.feasible.project(start.unwrap_or(self.anchor));
        let mut ux = self.objective(&x);
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut best: Option<(f64, DVector<f64>)> = None;

        for iter in 1..=MAX_INNER {
            let gy = self.smooth_gradient(&y);
            let sy = self.smooth_value(&y);
            let (xp, gxp) = loop {
                let gamma = 1.0 / lip;
                let xp = self.prox(&(&y - &gy * gamma), gamma);
                let d = &xp - &y;
                let model = sy + gy.dot(&d) + 0.5 * lip * d.norm_squared();
                let sxp = self.smooth_value(&xp);
                if sxp <= model + 1e-12 * (1.0 + sy.abs()) || lip > 1e300 {
                    let gxp = self.smooth_gradient(&xp);
                    break (xp, gxp);
                }
                lip *= 2.0;
            };
            if !all_finite(&xp) {
                return Err(SurrogateError::NonFinite);
            }
            let v = (&y - &xp) * lip - &gy + &gxp;
            let cert = v.norm() / mu;
            let target = if floor {
                let rounding = 1e3 * f64::EPSILON * (lip / mu) * (1.0 + xp.norm());
                tol.max(rounding)
            } else {
                tol
            };
            if best.as_ref().is_none_or(|(b, _)| cert < *b) {
                best = Some((cert, xp.clone()));
            }
            if cert <= target {
                return Ok(SolveReport {
                    solution: xp,
                    accuracy_bound: cert,
                    inner_iterations: iter,
                });
            }
            let uxp = self.objective(&xp);
            if uxp > ux {
                t = 1.0;
                y = xp.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = &xp + (&xp - &x) * ((t - 1.0) / t_next);
                t = t_next;
            }
            x = xp;
            ux = uxp;
        }
        let (cert, xb) = best.expect("at least one iteration ran");
        if floor && cert <= 1e-9 * (1.0 + xb.norm()) {
            return Ok(SolveReport {
                solution: xb,
                accuracy_bound: cert,
                inner_iterations: MAX_INNER,
            });
        }
        Err(SurrogateError::NoConvergence {
            iterations: MAX_INNER,
            residual: cert,
        })
    }

    /// Solves each block of a block-separable surrogate on its own, in
    /// parallel, and stitches the blocks together. Requires `K` and `G` to
    /// split over the same blocks.
    pub fn solve_blocks(&self) -> Result<DVector<f64>, SurrogateError> {
        let blocks = self.surrogate.blocks().ok_or(SurrogateError::NotSeparable)?;
        let parts: Vec<Result<(Vec<usize>, DVector<f64>), SurrogateError>> = blocks
            .par_iter()
            .enumerate()
            .map(|(c, idx)| {
                let set = self.feasible.restrict(idx).ok_or(SurrogateError::NotSeparable)?;
                let reg = self.regularizer.restrict(idx).ok_or(SurrogateError::NotSeparable)?;
                let view = self
                    .surrogate
                    .block_view(c, self.anchor)
                    .ok_or(SurrogateError::NotSeparable)?;
                let ac = gather(self.anchor, idx);
                let pc = gather(self.pi, idx);
                let sub = Subproblem::new(view.as_ref(), &ac, &pc, reg.as_ref(), set.as_ref());
                Ok((idx.clone(), sub.solve_exact()?))
            })
            .collect();
        let mut x = self.anchor.clone();
        for part in parts {
            let (idx, xc) = part?;
            for (j, &k) in idx.iter().enumerate() {
                x[k] = xc[j];
            }
        }
        Ok(x)
    }
}

fn finite(x: DVector<f64>) -> Result<DVector<f64>, SurrogateError> {
    if all_finite(&x) {
        Ok(x)
    } else {
        Err(SurrogateError::NonFinite)
    }
}
