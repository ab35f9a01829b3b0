//! Strongly convex surrogates `f̃_i(•; x_i[n])` and the agent subproblem
//! `Ũ_i(x) = f̃_i(x; a) + π̃ᵀ(x − a) + G(x)` over `K`.
//!
//! Every surrogate must satisfy three properties:
//! 1. It is strongly convex in `x` with modulus at least `τ`.
//! 2. Its gradient at the anchor equals the gradient of the true cost there.
//! 3. Its gradient is Lipschitz in the anchor.

mod boxqp;
pub mod checks;
mod kinds;
mod subproblem;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{FeasibleSet, LocalCost, Regularizer};

pub use boxqp::box_qp;
pub use kinds::{
    BlockConvex, BlockSeparable, Composition, KeepConvex, Linearize, Newton, PartialLinearize,
    ScalarConvex,
};
pub use subproblem::{SolveReport, Subproblem, EXACT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("tau must be finite and positive for the {kind} surrogate (got {tau})")]
    InvalidTau { kind: &'static str, tau: f64 },
    #[error("the {kind} surrogate requires a convex cost")]
    NotConvex { kind: &'static str },
    #[error("the newton surrogate requires a Hessian oracle")]
    MissingHessian,
    #[error("indefinite Hessian at the anchor (smallest eigenvalue {min_eig:.3e})")]
    IndefiniteHessian { min_eig: f64 },
    #[error("invalid block split: {0}")]
    InvalidBlocks(String),
    #[error("inner solver stopped after {iterations} iterations with certificate {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("non-finite value in the subproblem")]
    NonFinite,
    #[error("the feasible set or regularizer is not separable over the declared blocks")]
    NotSeparable,
}

/// Hessian of a surrogate that is quadratic in `x` for a fixed anchor.
#[derive(Clone, Debug)]
pub enum QuadraticHessian {
    ScaledIdentity(f64),
    Dense(DMatrix<f64>),
}

/// `f̃(x; a) = const + gᵀ(x − a) + ½ (x − a)ᵀ H (x − a)`.
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    pub hessian: QuadraticHessian,
    pub gradient: DVector<f64>,
}

/// A surrogate family bound to one agent's cost.
pub trait Surrogate: Send + Sync {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// Proximal weight `τ`.
    fn tau(&self) -> f64;

    /// Guaranteed strong convexity modulus in `x`; never below `tau`.
    fn modulus(&self) -> f64 {
        self.tau()
    }

    fn value(&self, x: &DVector<f64>, anchor: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>, anchor: &DVector<f64>) -> DVector<f64>;

    /// Quadratic form when `f̃(•; anchor)` is exactly quadratic.
    fn quadratic(&self, _anchor: &DVector<f64>) -> Option<QuadraticModel> {
        None
    }

    /// Lipschitz constant of `∇f̃(•; anchor)` when known.
    fn smoothness(&self, _anchor: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Closed-form minimizer of the subproblem, when one is available.
    fn best_response(
        &self,
        _anchor: &DVector<f64>,
        _pi: &DVector<f64>,
        _regularizer: &dyn Regularizer,
        _set: &dyn FeasibleSet,
    ) -> Option<DVector<f64>> {
        None
    }

    /// Anchor-dependent admissibility, e.g. a positive semidefinite Hessian.
    fn validate_anchor(&self, _anchor: &DVector<f64>) -> Result<(), SurrogateError> {
        Ok(())
    }

    /// Coordinate blocks over which `f̃` is additively separable.
    fn blocks(&self) -> Option<&[Vec<usize>]> {
        None
    }

    /// The block-`c` term of a block-separable surrogate as a surrogate in the
    /// block variables, frozen at the full anchor.
    fn block_view(&self, _block: usize, _anchor: &DVector<f64>) -> Option<Box<dyn Surrogate + '_>> {
        None
    }
}

/// Config-level choice of surrogate family for costs without app-specific structure.
#[derive(Clone)]
pub enum SurrogateKind {
    Linearize,
    KeepConvex,
    Newton,
    /// Keeps the cost in the `convex` coordinates and linearizes the rest.
    PartialLinearize { convex: Vec<usize> },
    /// Two blocks, each of which the cost is convex in separately.
    BlockConvex { first: Vec<usize> },
    /// `f = outer ∘ inner` with `outer` convex.
    Composition {
        outer: ScalarConvex,
        inner: Arc<dyn LocalCost>,
    },
    /// Additively separable over `blocks`; each block keeps the cost with the
    /// other blocks frozen (`keep_convex`) or linearizes it.
    BlockSeparable {
        blocks: Vec<Vec<usize>>,
        keep_convex: bool,
    },
}

impl SurrogateKind {
    pub fn name(&self) -> &'static str {
        match self {
            SurrogateKind::Linearize => "linearize",
            SurrogateKind::KeepConvex => "keep-convex",
            SurrogateKind::Newton => "newton",
            SurrogateKind::PartialLinearize { .. } => "partial-linearize",
            SurrogateKind::BlockConvex { .. } => "block-convex",
            SurrogateKind::Composition { .. } => "composition",
            SurrogateKind::BlockSeparable { .. } => "block-separable",
        }
    }
}

impl std::fmt::Debug for SurrogateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Binds a surrogate family to a cost, rejecting combinations that cannot be
/// strongly convex.
pub fn build_surrogate(
    cost: Arc<dyn LocalCost>,
    kind: SurrogateKind,
    tau: f64,
) -> Result<Arc<dyn Surrogate>, SurrogateError> {
    let model: Arc<dyn Surrogate> = match kind {
        SurrogateKind::Linearize => Arc::new(Linearize::new(cost, tau)?),
        SurrogateKind::KeepConvex => Arc::new(KeepConvex::new(cost, tau)?),
        SurrogateKind::Newton => Arc::new(Newton::new(cost, tau)?),
        SurrogateKind::PartialLinearize { convex } => {
            Arc::new(PartialLinearize::new(cost, convex, tau)?)
        }
        SurrogateKind::BlockConvex { first } => Arc::new(BlockConvex::new(cost, first, tau)?),
        SurrogateKind::Composition { outer, inner } => {
            if inner.dim() != cost.dim() {
                return Err(SurrogateError::InvalidBlocks(
                    "inner map dimension differs from the cost".into(),
                ));
            }
            Arc::new(Composition::new(outer, inner, tau)?)
        }
        SurrogateKind::BlockSeparable {
            blocks,
            keep_convex,
        } => Arc::new(BlockSeparable::new(cost, blocks, keep_convex, tau)?),
    };
    Ok(model)
}

pub(crate) fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&k| v[k]))
}

pub(crate) fn scatter(base: &DVector<f64>, idx: &[usize], vals: &DVector<f64>) -> DVector<f64> {
    let mut out = base.clone();
    for (j, &k) in idx.iter().enumerate() {
        out[k] = vals[j];
    }
    out
}

pub(crate) fn complement(dim: usize, idx: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; dim];
    for &k in idx {
        mask[k] = true;
    }
    (0..dim).filter(|&k| !mask[k]).collect()
}

pub(crate) fn check_tau(kind: &'static str, tau: f64, allow_zero: bool) -> Result<(), SurrogateError> {
    let ok = tau.is_finite() && (tau > 0.0 || (allow_zero && tau == 0.0));
    if ok {
        Ok(())
    } else {
        Err(SurrogateError::InvalidTau { kind, tau })
    }
}

#[cfg(test)]
mod tests;
