//! Contracts for `min_{x ∈ K} U(x) = Σ_i f_i(x) + G(x)`.

pub mod checks;
mod costs;
mod regularizer;
mod sets;

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use costs::{Curvature, FnCost, LeastSquaresCost, LocalCost, ZeroCost};
pub use regularizer::{L1Regularizer, LinearRegularizer, Regularizer, ZeroRegularizer};
pub use sets::{Ball, BoxSet, FeasibleSet, FullSpace, Polyhedron, CONTAINS_TOL};

use crate::util::inf_norm;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("a problem needs at least one agent")]
    NoAgents,
    #[error("dimension mismatch: {what} has dimension {found}, expected {expected}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// The agents' local costs together with the shared regularizer and feasible set.
#[derive(Clone)]
pub struct DistributedProblem {
    costs: Vec<Arc<dyn LocalCost>>,
    regularizer: Arc<dyn Regularizer>,
    feasible: Arc<dyn FeasibleSet>,
}

impl std::fmt::Debug for DistributedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistributedProblem")
            .field("agents", &self.costs.len())
            .field("dim", &self.dim())
            .finish_non_exhaustive()
    }
}

impl DistributedProblem {
    pub fn new(
        costs: Vec<Arc<dyn LocalCost>>,
        regularizer: Arc<dyn Regularizer>,
        feasible: Arc<dyn FeasibleSet>,
    ) -> Result<Self, ProblemError> {
        let Some(first) = costs.first() else {
            return Err(ProblemError::NoAgents);
        };
        let m = first.dim();
        for (i, c) in costs.iter().enumerate() {
            if c.dim() != m {
                return Err(ProblemError::Dimension {
                    what: format!("cost of agent {i}"),
                    expected: m,
                    found: c.dim(),
                });
            }
        }
        if feasible.dim() != m {
            return Err(ProblemError::Dimension {
                what: "feasible set".into(),
                expected: m,
                found: feasible.dim(),
            });
        }
        Ok(Self {
            costs,
            regularizer,
            feasible,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.costs[0].dim()
    }

    pub fn cost(&self, i: usize) -> &Arc<dyn LocalCost> {
        &self.costs[i]
    }

    pub fn costs(&self) -> &[Arc<dyn LocalCost>] {
        &self.costs
    }

    pub fn regularizer(&self) -> &Arc<dyn Regularizer> {
        &self.regularizer
    }

    pub fn feasible(&self) -> &Arc<dyn FeasibleSet> {
        &self.feasible
    }

    /// `F(x) = Σ_i f_i(x)`.
    pub fn sum_value(&self, x: &DVector<f64>) -> f64 {
        self.costs.iter().map(|c| c.value(x)).sum()
    }

    /// `U(x) = F(x) + G(x)`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.sum_value(x) + self.regularizer.value(x)
    }

    /// `∇F(x) = Σ_i ∇f_i(x)`.
    pub fn sum_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for c in &self.costs {
            g += c.gradient(x);
        }
        g
    }

    /// `prox_{G + ι_K}(x − ∇F(x))` with unit step. With `G = 0` this is the
    /// plain projection `Π_K(x − ∇F(x))`.
    pub fn prox_gradient_point(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = x - self.sum_gradient(x);
        self.regularizer.prox(&v, 1.0, self.feasible.as_ref())
    }

    /// `‖x − prox_{G + ι_K}(x − ∇F(x))‖_∞`. This is zero exactly at the
    /// stationary points of `U` over `K`.
    pub fn stationarity_residual(&self, x: &DVector<f64>) -> f64 {
        inf_norm(&(x - self.prox_gradient_point(x)))
    }

    /// `L^max`, the largest Lipschitz hint, when every cost provides one.
    pub fn lipschitz_max(&self) -> Option<f64> {
        self.costs
            .iter()
            .map(|c| c.lipschitz_hint())
            .try_fold(0.0_f64, |acc, l| l.map(|l| acc.max(l)))
    }
}

/// Uniform sample over the bounding box of `K`, projected onto `K`. Unbounded
/// coordinates are drawn from a standard normal.
pub fn sample_point(set: &dyn FeasibleSet, rng: &mut impl Rng) -> DVector<f64> {
    let (lo, up) = set.bounding_box();
    let v = DVector::from_fn(set.dim(), |k, _| {
        if lo[k].is_finite() && up[k].is_finite() {
            lo[k] + (up[k] - lo[k]) * rng.random::<f64>()
        } else {
            let z: f64 = rng.sample(StandardNormal);
            if lo[k].is_finite() {
                lo[k] + z.abs()
            } else if up[k].is_finite() {
                up[k] - z.abs()
            } else {
                z
            }
        }
    });
    set.project(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half_norm_sq(dim: usize) -> Arc<dyn LocalCost> {
        Arc::new(
            FnCost::new(dim, |x| 0.5 * x.norm_squared(), |x| x.clone())
                .with_curvature(Curvature::StronglyConvex(1.0)),
        )
    }

    #[test]
    fn singleton_sum_gradient_is_the_agent_gradient() {
        let c: Arc<dyn LocalCost> = Arc::new(FnCost::new(2, |x| x[0].sin() + x[1], |x| {
            DVector::from_vec(vec![x[0].cos(), 1.0])
        }));
        let p = DistributedProblem::new(vec![c.clone()], Arc::new(ZeroRegularizer), Arc::new(FullSpace::new(2))).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0]);
        assert_eq!(p.sum_gradient(&x), c.gradient(&x));
    }

    #[test]
    fn identical_quadratics_scale_with_agent_count() {
        let p = DistributedProblem::new(
            (0..4).map(|_| half_norm_sq(2)).collect(),
            Arc::new(ZeroRegularizer),
            Arc::new(FullSpace::new(2)),
        )
        .unwrap();
        let g = p.sum_gradient(&DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(g.as_slice(), &[4.0, 4.0]);
    }

    #[test]
    fn minimizer_has_zero_residual() {
        let p = DistributedProblem::new(vec![half_norm_sq(3)], Arc::new(ZeroRegularizer), Arc::new(FullSpace::new(3))).unwrap();
        assert!(p.stationarity_residual(&DVector::zeros(3)) <= 1e-12);
    }

    #[test]
    fn boundary_stationary_point_has_zero_residual() {
        let c: Arc<dyn LocalCost> = Arc::new(FnCost::new(1, |x| x[0], |_| DVector::from_element(1, 1.0)));
        let p = DistributedProblem::new(vec![c], Arc::new(ZeroRegularizer), Arc::new(BoxSet::uniform(1, 0.0, 1.0))).unwrap();
        assert_eq!(p.stationarity_residual(&DVector::from_element(1, 0.0)), 0.0);
        assert_eq!(p.stationarity_residual(&DVector::from_element(1, 0.5)), 0.5);
    }

    #[test]
    fn l1_residual_vanishes_at_lasso_solution() {
        // f(x) = ½(x − 3)², G = |x|: minimizer 2.
        let c: Arc<dyn LocalCost> = Arc::new(FnCost::new(1, |x| 0.5 * (x[0] - 3.0).powi(2), |x| {
            DVector::from_element(1, x[0] - 3.0)
        }));
        let p = DistributedProblem::new(vec![c], Arc::new(L1Regularizer::new(1.0)), Arc::new(FullSpace::new(1))).unwrap();
        assert!(p.stationarity_residual(&DVector::from_element(1, 2.0)) < 1e-15);
        assert!(p.stationarity_residual(&DVector::from_element(1, 1.0)) > 0.5);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = DistributedProblem::new(
            vec![half_norm_sq(2), half_norm_sq(3)],
            Arc::new(ZeroRegularizer),
            Arc::new(FullSpace::new(2)),
        );
        assert!(matches!(err, Err(ProblemError::Dimension { .. })));
    }

    #[test]
    fn least_squares_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = nalgebra::DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>() - 0.5);
        let phi = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let c = LeastSquaresCost::new(b, phi);
        let k = BoxSet::uniform(3, -2.0, 2.0);
        assert!(checks::worst_gradient_error(&c, &k, 20, &mut rng) < 1e-5);
    }

    #[test]
    fn bundled_sets_and_regularizers_pass_spot_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sets: Vec<Box<dyn FeasibleSet>> = vec![
            Box::new(FullSpace::new(3)),
            Box::new(BoxSet::uniform(3, -1.0, 0.5)),
            Box::new(Ball::new(DVector::from_vec(vec![0.2, 0.0, -0.1]), 0.7)),
            Box::new(Polyhedron::new(
                BoxSet::uniform(3, 0.0, 1.0),
                vec![(DVector::from_vec(vec![1.0, 1.0, 0.0]), 1.0), (DVector::from_vec(vec![0.0, 1.0, 1.0]), 0.8)],
            )),
        ];
        for s in &sets {
            assert!(checks::worst_projection_violation(s.as_ref(), 50, 3.0, &mut rng) <= 1e-12);
        }
        let regs: Vec<Box<dyn Regularizer>> = vec![
            Box::new(ZeroRegularizer),
            Box::new(LinearRegularizer::uniform(3, 0.7)),
            Box::new(L1Regularizer::new(0.4)),
        ];
        let k = BoxSet::uniform(3, -2.0, 2.0);
        for r in &regs {
            assert!(checks::worst_regularizer_violation(r.as_ref(), &k, 100, &mut rng) <= 1e-10);
        }
    }

    #[test]
    fn samples_lie_in_the_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = Ball::new(DVector::from_vec(vec![5.0, 5.0]), 1.0);
        for _ in 0..100 {
            assert!(k.contains(&sample_point(&k, &mut rng), 1e-12));
        }
        let free = FullSpace::new(2);
        let p = sample_point(&free, &mut rng);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
