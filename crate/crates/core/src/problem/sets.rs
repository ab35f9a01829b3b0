use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Closed convex feasible set `K` accessed through its projection.
///
/// Implementations must be pure and reentrant; the solver projects from
/// several agents concurrently.
pub trait FeasibleSet: Send + Sync {
    fn dim(&self) -> usize;

    /// Euclidean projection `Π_K(v)`.
    fn project(&self, v: &DVector<f64>) -> DVector<f64>;

    /// Membership with an absolute per-coordinate (or per-constraint) tolerance.
    fn contains(&self, v: &DVector<f64>, tol: f64) -> bool;

    /// `Some((lower, upper))` when `K` is exactly a box.
    fn box_bounds(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        None
    }

    /// True when `K` is a product of intervals (a box or the full space), so
    /// coordinatewise proxes compose exactly with the projection.
    fn coordinatewise(&self) -> bool {
        self.box_bounds().is_some()
    }

    /// Coordinate-wise bounding box of `K`, possibly with infinite sides. Used
    /// to sample initial points.
    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.dim();
        (
            DVector::from_element(n, f64::NEG_INFINITY),
            DVector::from_element(n, f64::INFINITY),
        )
    }

    /// The factor of `K` on a coordinate block, when `K` is a product set.
    fn restrict(&self, _indices: &[usize]) -> Option<Arc<dyn FeasibleSet>> {
        None
    }
}

/// Default membership tolerance.
pub const CONTAINS_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct FullSpace {
    dim: usize,
}

impl FullSpace {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl FeasibleSet for FullSpace {
    fn dim(&self) -> usize {
        self.dim
    }
    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
    fn contains(&self, v: &DVector<f64>, _tol: f64) -> bool {
        v.len() == self.dim
    }
    fn coordinatewise(&self) -> bool {
        true
    }
    fn restrict(&self, indices: &[usize]) -> Option<Arc<dyn FeasibleSet>> {
        Some(Arc::new(FullSpace::new(indices.len())))
    }
}

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`; sides may be infinite.
#[derive(Clone, Debug)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "box bounds must have equal length");
        assert!(
            lower.iter().zip(upper.iter()).all(|(l, u)| l <= u),
            "box lower bound exceeds upper bound"
        );
        Self { lower, upper }
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self::new(DVector::from_element(dim, lower), DVector::from_element(dim, upper))
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn clamp(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(x, (l, u))| x.max(*l).min(*u)),
        )
    }
}

impl FeasibleSet for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }
    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        self.clamp(v)
    }
    fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        v.len() == self.dim()
            && v.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }
    fn box_bounds(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        Some((&self.lower, &self.upper))
    }
    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        (self.lower.clone(), self.upper.clone())
    }
    fn restrict(&self, indices: &[usize]) -> Option<Arc<dyn FeasibleSet>> {
        let lo = DVector::from_iterator(indices.len(), indices.iter().map(|&k| self.lower[k]));
        let up = DVector::from_iterator(indices.len(), indices.iter().map(|&k| self.upper[k]));
        Some(Arc::new(BoxSet::new(lo, up)))
    }
}

/// Euclidean ball.
#[derive(Clone, Debug)]
pub struct Ball {
    center: DVector<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        assert!(radius >= 0.0);
        Self { center, radius }
    }
}

impl FeasibleSet for Ball {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = v - &self.center;
        let n = d.norm();
        if n <= self.radius {
            v.clone()
        } else {
            &self.center + d * (self.radius / n)
        }
    }
    fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        (v - &self.center).norm() <= self.radius + tol
    }
    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        (
            self.center.add_scalar(-self.radius),
            self.center.add_scalar(self.radius),
        )
    }
}

/// `{x : lower ≤ x ≤ upper, a_kᵀx ≤ b_k}`.
///
/// Projection maximizes the concave dual over the multipliers `λ ≥ 0` of the
/// halfspaces, with `x(λ) = clamp(v − Aᵀλ)`, by projected Newton steps.
/// Dykstra's alternating projections serve as a fallback.
#[derive(Clone, Debug)]
pub struct Polyhedron {
    bounds: BoxSet,
    halfspaces: Vec<(DVector<f64>, f64)>,
    tol: f64,
    max_sweeps: usize,
}

impl Polyhedron {
    pub fn new(bounds: BoxSet, halfspaces: Vec<(DVector<f64>, f64)>) -> Self {
        for (a, _) in &halfspaces {
            assert_eq!(a.len(), bounds.dim(), "halfspace normal has wrong length");
            assert!(a.norm() > 0.0, "halfspace normal must be nonzero");
        }
        Self {
            bounds,
            halfspaces,
            tol: 1e-14,
            max_sweeps: 200_000,
        }
    }

    pub fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    pub fn halfspaces(&self) -> &[(DVector<f64>, f64)] {
        &self.halfspaces
    }

    /// Projected Newton on `φ(λ) = −min_{x ∈ box} ½‖x − v‖² + λᵀ(Ax − b)`,
    /// whose gradient is `b − A x(λ)`. Stops when `|min(λ_k, ∂_k φ)|` is at
    /// round-off level for every `k`.
    fn project_dual(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.halfspaces.len();
        let n = v.len();
        let a = DMatrix::from_fn(m, n, |k, i| self.halfspaces[k].0[i]);
        let b = DVector::from_fn(m, |k, _| self.halfspaces[k].1);
        let lo = self.bounds.lower();
        let hi = self.bounds.upper();
        let primal = |lam: &DVector<f64>| self.bounds.clamp(&(v - a.tr_mul(lam)));
        let phi = |lam: &DVector<f64>, x: &DVector<f64>| -(0.5 * (x - v).norm_squared() + lam.dot(&(&a * x - &b)));
        let scale = 1.0 + v.amax() * a.amax() + b.amax();
        let tol = 1e-14 * scale;

        let mut lam = DVector::zeros(m);
        let mut x = primal(&lam);
        let mut f = phi(&lam, &x);
        for _ in 0..100 {
            let grad = &b - &a * &x;
            let kkt = (0..m).map(|k| lam[k].min(grad[k]).abs()).fold(0.0, f64::max);
            if kkt <= tol {
                return Some(self.bounds.clamp(&x));
            }
            let eps = kkt.min(1e-6);
            let free: Vec<usize> = (0..m).filter(|&k| !(lam[k] <= eps && grad[k] > 0.0)).collect();
            let interior: Vec<usize> = (0..n).filter(|&i| lo[i] < x[i] && x[i] < hi[i]).collect();
            let mut d = -grad.clone();
            if !free.is_empty() {
                let af = DMatrix::from_fn(free.len(), interior.len(), |r, c| a[(free[r], interior[c])]);
                let mut h = &af * af.transpose();
                let ridge = 1e-12 * (1.0 + h.diagonal().amax());
                for r in 0..free.len() {
                    h[(r, r)] += ridge;
                }
                let rhs = DVector::from_fn(free.len(), |r, _| -grad[free[r]]);
                let step = h.cholesky()?.solve(&rhs);
                for (r, &k) in free.iter().enumerate() {
                    d[k] = step[r];
                }
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = (&lam + &d * t).map(|l| l.max(0.0));
                let xt = primal(&trial);
                let ft = phi(&trial, &xt);
                if ft <= f + 1e-4 * grad.dot(&(&trial - &lam)) + 1e-15 * scale * scale {
                    accepted = (&trial - &lam).amax() > 0.0;
                    lam = trial;
                    x = xt;
                    f = ft;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        None
    }

    fn project_dykstra(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.halfspaces.len() + 1;
        let mut x = v.clone();
        let mut incr = vec![DVector::zeros(v.len()); m];
        for _ in 0..self.max_sweeps {
            let start = x.clone();
            let mut shift = 0.0_f64;
            for k in 0..m {
                let y = &x + &incr[k];
                let p = if k == 0 {
                    self.bounds.clamp(&y)
                } else {
                    let (a, b) = &self.halfspaces[k - 1];
                    Self::project_halfspace(a, *b, &y)
                };
                let next = y - &p;
                shift = shift.max((&next - &incr[k]).amax());
                incr[k] = next;
                x = p;
            }
            let moved = (&x - &start).amax().max(shift);
            let incr_total: f64 = incr.iter().map(|c| c.amax()).sum();
            if moved <= self.tol * (1.0 + incr_total) && self.contains(&x, 1e-12) {
                break;
            }
        }
        // Finish in the box so the bound constraints hold exactly.
        self.bounds.clamp(&x)
    }

    fn project_halfspace(a: &DVector<f64>, b: f64, v: &DVector<f64>) -> DVector<f64> {
        let viol = a.dot(v) - b;
        if viol <= 0.0 {
            v.clone()
        } else {
            v - a * (viol / a.norm_squared())
        }
    }
}

impl FeasibleSet for Polyhedron {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.contains(v, 0.0) {
            return v.clone();
        }
        self.project_dual(v).unwrap_or_else(|| self.project_dykstra(v))
    }

    fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.bounds.contains(v, tol)
            && self.halfspaces.iter().all(|(a, b)| a.dot(v) <= b + tol)
    }

    fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        self.bounds.bounding_box()
    }
}
