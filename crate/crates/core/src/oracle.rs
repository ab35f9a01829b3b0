//! Centralized reference solutions: multi-start accelerated proximal gradient on
//! `U = F + G` over `K`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::problem::{sample_point, DistributedProblem};

/// Default restart count for nonconvex problems.
pub const DEFAULT_RESTARTS: usize = 20;

/// Iteration cap per restart.
pub const MAX_ITERATIONS: usize = 200_000;

/// Objectives closer than this are treated as tied.
const TIE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("tolerance must be positive and finite (got {0})")]
    Tolerance(f64),
    #[error("at least one restart is required")]
    NoRestarts,
    #[error("no restart reached the tolerance within {iterations} iterations (best residual {best:.3e})")]
    CapExceeded { iterations: usize, best: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub point: DVector<f64>,
    pub objective: f64,
    /// `‖x − prox_{G+ι_K}(x − ∇F(x))‖_∞` at `point`.
    pub residual: f64,
    /// Restarts that reached the tolerance.
    pub restarts: usize,
}

struct Run {
    point: DVector<f64>,
    objective: f64,
    residual: f64,
}

/// Best stationary point over `restarts` seeded starts, each run until the
/// stationarity residual is at most `tol`. Restarts run in parallel; the
/// reduction is deterministic.
pub fn centralized_solve(
    problem: &DistributedProblem,
    tol: f64,
    restarts: usize,
    seed: u64,
) -> Result<OracleSolution, OracleError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(OracleError::Tolerance(tol));
    }
    if restarts == 0 {
        return Err(OracleError::NoRestarts);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<DVector<f64>> = (0..restarts)
        .map(|_| {
            let mut local = ChaCha8Rng::seed_from_u64(rng.random());
            sample_point(problem.feasible().as_ref(), &mut local)
        })
        .collect();
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|x0| solve_from(problem, x0, tol, MAX_ITERATIONS))
        .collect();

    let best_residual = runs.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
    let converged: Vec<&Run> = runs.iter().filter(|r| r.residual <= tol).collect();
    let count = converged.len();
    let best = converged.into_iter().reduce(|a, b| {
        if b.objective < a.objective - TIE
            || ((b.objective - a.objective).abs() <= TIE && lexicographic_lt(&b.point, &a.point))
        {
            b
        } else {
            a
        }
    });
    match best {
        Some(r) => Ok(OracleSolution {
            point: r.point.clone(),
            objective: r.objective,
            residual: r.residual,
            restarts: count,
        }),
        None => Err(OracleError::CapExceeded {
            iterations: MAX_ITERATIONS,
            best: best_residual,
        }),
    }
}

fn lexicographic_lt(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Accelerated proximal gradient with backtracking. A momentum step that
/// raises `U` is replaced by a plain proximal gradient step from the current
/// point, so `U` never increases.
fn solve_from(problem: &DistributedProblem, x0: DVector<f64>, tol: f64, cap: usize) -> Run {
    let reg = problem.regularizer();
    let set = problem.feasible();
    let f = |x: &DVector<f64>| problem.sum_value(x);
    let u = |x: &DVector<f64>| problem.objective(x);
    let step = |y: &DVector<f64>, gamma: &mut f64| -> DVector<f64> {
        let fy = f(y);
        let gy = problem.sum_gradient(y);
        loop {
            let xp = reg.prox(&(y - &gy * *gamma), *gamma, set.as_ref());
            let d = &xp - y;
            if f(&xp) <= fy + gy.dot(&d) + d.norm_squared() / (2.0 * *gamma) + 1e-14 * fy.abs()
                || *gamma < 1e-20
            {
                return xp;
            }
            *gamma *= 0.5;
        }
    };

    let mut gamma = problem.lipschitz_max().filter(|l| *l > 0.0).map_or(1.0, |l| 1.0 / l);
    let mut x = set.project(&x0);
    let mut ux = u(&x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut residual = problem.stationarity_residual(&x);
    let mut iterations = 0;
    while residual > tol && iterations < cap {
        iterations += 1;
        gamma *= 1.25;
        let mut xn = step(&y, &mut gamma);
        let mut un = u(&xn);
        if un > ux {
            xn = step(&x, &mut gamma);
            un = u(&xn);
            t = 1.0;
            y = xn.clone();
        } else {
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &xn + (&xn - &x) * ((t - 1.0) / tn);
            t = tn;
        }
        x = xn;
        ux = un;
        residual = problem.stationarity_residual(&x);
    }
    Run {
        point: x,
        objective: ux,
        residual,
    }
}
