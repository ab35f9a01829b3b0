use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// What is known about the convexity of a local cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Curvature {
    Nonconvex,
    Convex,
    /// Strongly convex with the given modulus.
    StronglyConvex(f64),
}

impl Curvature {
    pub fn is_convex(self) -> bool {
        !matches!(self, Curvature::Nonconvex)
    }

    pub fn modulus(self) -> f64 {
        match self {
            Curvature::StronglyConvex(mu) => mu,
            _ => 0.0,
        }
    }
}

/// Smooth local cost `f_i` of one agent.
///
/// Implementations must be pure and reentrant.
pub trait LocalCost: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn curvature(&self) -> Curvature {
        Curvature::Nonconvex
    }

    /// Optional Lipschitz constant of the gradient on `K`.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    /// True when the cost is a quadratic, so its Hessian is constant.
    fn is_quadratic(&self) -> bool {
        false
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A cost assembled from closures.
#[derive(Clone)]
pub struct FnCost {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
    hessian: Option<Arc<HessFn>>,
    curvature: Curvature,
    lipschitz: Option<f64>,
    quadratic: bool,
}

impl FnCost {
    pub fn new(
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: None,
            curvature: Curvature::Nonconvex,
            lipschitz: None,
            quadratic: false,
        }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    pub fn with_curvature(mut self, curvature: Curvature) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    /// Declares the cost quadratic; the Hessian oracle must then be constant.
    pub fn quadratic(mut self) -> Self {
        self.quadratic = true;
        self
    }
}

impl std::fmt::Debug for FnCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnCost")
            .field("dim", &self.dim)
            .field("curvature", &self.curvature)
            .finish_non_exhaustive()
    }
}

impl LocalCost for FnCost {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }
    fn curvature(&self) -> Curvature {
        self.curvature
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz
    }
    fn is_quadratic(&self) -> bool {
        self.quadratic && self.hessian.is_some()
    }
}

/// `f(x) = ‖φ − B x‖²`.
#[derive(Clone, Debug)]
pub struct LeastSquaresCost {
    regressors: DMatrix<f64>,
    measurements: DVector<f64>,
    gram: DMatrix<f64>,
    lipschitz: f64,
}

impl LeastSquaresCost {
    pub fn new(regressors: DMatrix<f64>, measurements: DVector<f64>) -> Self {
        assert_eq!(regressors.nrows(), measurements.len());
        let gram = regressors.transpose() * &regressors * 2.0;
        let lipschitz = gram.clone().symmetric_eigenvalues().max().max(0.0);
        Self {
            regressors,
            measurements,
            gram,
            lipschitz,
        }
    }

    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.regressors
    }

    pub fn measurements(&self) -> &DVector<f64> {
        &self.measurements
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.measurements - &self.regressors * x
    }
}

impl LocalCost for LeastSquaresCost {
    fn dim(&self) -> usize {
        self.regressors.ncols()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.residual(x).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.regressors.tr_mul(&self.residual(x)) * -2.0
    }
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.gram.clone())
    }
    fn curvature(&self) -> Curvature {
        Curvature::Convex
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
    fn is_quadratic(&self) -> bool {
        true
    }
}

/// `f ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct ZeroCost {
    dim: usize,
}

impl ZeroCost {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LocalCost for ZeroCost {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim, self.dim))
    }
    fn curvature(&self) -> Curvature {
        Curvature::Convex
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(0.0)
    }
    fn is_quadratic(&self) -> bool {
        true
    }
}
