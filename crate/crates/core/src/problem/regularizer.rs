use std::sync::Arc;

use nalgebra::DVector;

use super::sets::FeasibleSet;

/// Shared convex regularizer `G`.
pub trait Regularizer: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;

    /// Some element of `∂G(x)`.
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// `argmin_{u ∈ K} G(u) + ‖u − v‖² / (2γ)`.
    fn prox(&self, v: &DVector<f64>, gamma: f64, set: &dyn FeasibleSet) -> DVector<f64>;

    fn is_zero(&self) -> bool {
        false
    }

    /// Optional bound on `‖∂G‖` over `K`. Diagnostics only.
    fn bound_hint(&self) -> Option<f64> {
        None
    }

    /// `Some(c)` when `G(x) = cᵀx` on its domain.
    fn linear_part(&self, _dim: usize) -> Option<DVector<f64>> {
        None
    }

    /// The term of a separable `G` acting on a coordinate block.
    fn restrict(&self, _indices: &[usize]) -> Option<Arc<dyn Regularizer>> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroRegularizer;

impl Regularizer for ZeroRegularizer {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn prox(&self, v: &DVector<f64>, _gamma: f64, set: &dyn FeasibleSet) -> DVector<f64> {
        set.project(v)
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn bound_hint(&self) -> Option<f64> {
        Some(0.0)
    }
    fn linear_part(&self, dim: usize) -> Option<DVector<f64>> {
        Some(DVector::zeros(dim))
    }
    fn restrict(&self, _indices: &[usize]) -> Option<Arc<dyn Regularizer>> {
        Some(Arc::new(ZeroRegularizer))
    }
}

/// `G(x) = cᵀx`. Its prox on any `K` is `Π_K(v − γc)`.
#[derive(Clone, Debug)]
pub struct LinearRegularizer {
    weights: DVector<f64>,
}

impl LinearRegularizer {
    pub fn new(weights: DVector<f64>) -> Self {
        Self { weights }
    }

    /// `λ 1ᵀx`.
    pub fn uniform(dim: usize, lambda: f64) -> Self {
        Self::new(DVector::from_element(dim, lambda))
    }
}

impl Regularizer for LinearRegularizer {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.weights.dot(x)
    }
    fn subgradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.weights.clone()
    }
    fn prox(&self, v: &DVector<f64>, gamma: f64, set: &dyn FeasibleSet) -> DVector<f64> {
        set.project(&(v - &self.weights * gamma))
    }
    fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }
    fn bound_hint(&self) -> Option<f64> {
        Some(self.weights.norm())
    }
    fn linear_part(&self, _dim: usize) -> Option<DVector<f64>> {
        Some(self.weights.clone())
    }
    fn restrict(&self, indices: &[usize]) -> Option<Arc<dyn Regularizer>> {
        Some(Arc::new(LinearRegularizer::new(DVector::from_iterator(
            indices.len(),
            indices.iter().map(|&k| self.weights[k]),
        ))))
    }
}

/// `G(x) = λ‖x‖₁`.
///
/// The prox is exact on boxes and the full space: coordinatewise soft
/// thresholding followed by clamping, since each coordinate is a 1-D convex
/// problem on an interval. Other sets fall back to the proximal Dykstra
/// splitting between the soft-threshold and the projection.
#[derive(Clone, Copy, Debug)]
pub struct L1Regularizer {
    lambda: f64,
}

impl L1Regularizer {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0, "l1 weight must be nonnegative");
        Self { lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn soft(&self, v: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let t = self.lambda * gamma;
        v.map(|x| x.signum() * (x.abs() - t).max(0.0))
    }
}

impl Regularizer for L1Regularizer {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.lambda * x.lp_norm(1)
    }
    fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        // sign(0) = 0 is a valid element of [-1, 1].
        x.map(|v| if v == 0.0 { 0.0 } else { self.lambda * v.signum() })
    }
    fn prox(&self, v: &DVector<f64>, gamma: f64, set: &dyn FeasibleSet) -> DVector<f64> {
        let s = self.soft(v, gamma);
        if set.coordinatewise() {
            return set.project(&s);
        }
        // Proximal Dykstra for prox_{γG + ι_K}.
        let mut x = v.clone();
        let mut p = DVector::zeros(v.len());
        let mut q = DVector::zeros(v.len());
        for _ in 0..100_000 {
            let y = self.soft(&(&x + &p), gamma);
            p = &x + &p - &y;
            let x_next = set.project(&(&y + &q));
            q = &y + &q - &x_next;
            let moved = (&x_next - &x).amax();
            x = x_next;
            if moved <= 1e-15 * (1.0 + x.amax()) {
                break;
            }
        }
        x
    }
    fn bound_hint(&self) -> Option<f64> {
        None
    }
    fn restrict(&self, _indices: &[usize]) -> Option<Arc<dyn Regularizer>> {
        Some(Arc::new(*self))
    }
}
