//! Distributed nonconvex optimization over time-varying digraphs.
//!
//! Every agent owns one smooth (possibly nonconvex) cost `f_i`. All agents share a
//! convex regularizer `G` and a closed convex feasible set `K`, and together they
//! minimize `U(x) = Σ_i f_i(x) + G(x)` over `K`. Each iteration has two phases.
//! First, every agent minimizes a strongly convex surrogate of its cost, with the
//! other agents' gradients replaced by a locally tracked estimate. Second, the
//! agents run two consensus rounds over a doubly stochastic mixing matrix. One
//! round averages the iterates. The other updates the gradient trackers.
//!
//! Crate layout:
//!
//! * [`graph`]: digraph snapshots, Metropolis weights, B-connected schedules, and
//!   decay of transition products.
//! * [`problem`]: the local-cost, regularizer, and feasible-set contracts.
//! * [`surrogate`]: the surrogate families and the subproblem solvers (exact and
//!   certified-inexact).
//! * [`solver`]: the distributed driver, the gradient-consensus baseline, and the
//!   step-size rules.
//! * [`metrics`]: the stationarity gap, disagreement, NMSE, and CSV traces.
//! * [`apps`]: problem builders for localization, spectrum cartography, flow
//!   control, and sparse estimation.
//! * [`oracle`]: centralized multi-start reference solvers.

pub mod apps;
pub mod graph;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod surrogate;

pub use nalgebra::{DMatrix, DVector};

pub(crate) mod util {
    use nalgebra::DVector;

    pub fn inf_norm(v: &DVector<f64>) -> f64 {
        v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    pub fn all_finite(v: &DVector<f64>) -> bool {
        v.iter().all(|x| x.is_finite())
    }

    pub fn mean(vs: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(vs[0].len());
        for v in vs {
            acc += v;
        }
        acc / vs.len() as f64
    }
}
