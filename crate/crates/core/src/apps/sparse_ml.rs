//! Sparse maximum-likelihood estimation with a Laplacian prior.
//!
//! Node `i` holds measurements `φ_i = H_i x₀ + noise` and the negative
//! log-likelihood `f_i(x) = −log p(φ_i | x)` up to constants. The estimate
//! minimizes `Σ_i f_i(x) + λ‖x‖₁` over `K`. Gaussian noise gives a LASSO;
//! Student-t noise gives a nonconvex `f_i`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use super::AppError;
use crate::problem::{
    BoxSet, Curvature, DistributedProblem, FeasibleSet, L1Regularizer, LeastSquaresCost, LocalCost,
};
use crate::surrogate::{build_surrogate, Surrogate, SurrogateError, SurrogateKind};

/// `f(x) = (ν + 1)/2 Σ_k log(1 + r_k²/(ν s²))` with `r = φ − Hx`: the negative
/// log-likelihood of Student-t noise with `ν` degrees of freedom and scale `s`.
#[derive(Clone, Debug)]
pub struct StudentTCost {
    h: DMatrix<f64>,
    phi: DVector<f64>,
    nu: f64,
    scale: f64,
    lipschitz: f64,
}

impl StudentTCost {
    pub fn new(h: DMatrix<f64>, phi: DVector<f64>, nu: f64, scale: f64) -> Self {
        assert_eq!(h.nrows(), phi.len());
        assert!(nu > 0.0 && scale > 0.0);
        let gram_norm = (h.transpose() * &h).symmetric_eigenvalues().max().max(0.0);
        // |d²/dr² log(1 + r²/c)| ≤ 2/c.
        let lipschitz = (nu + 1.0) / (nu * scale * scale) * gram_norm;
        Self {
            h,
            phi,
            nu,
            scale,
            lipschitz,
        }
    }

    fn c(&self) -> f64 {
        self.nu * self.scale * self.scale
    }
}

impl LocalCost for StudentTCost {
    fn dim(&self) -> usize {
        self.h.ncols()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = &self.phi - &self.h * x;
        0.5 * (self.nu + 1.0) * r.iter().map(|v| (v * v / self.c()).ln_1p()).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = &self.phi - &self.h * x;
        let w = r.map(|v| v / (self.c() + v * v));
        self.h.tr_mul(&w) * -(self.nu + 1.0)
    }
    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let r = &self.phi - &self.h * x;
        let c = self.c();
        let d = r.map(|v| (self.nu + 1.0) * (c - v * v) / (c + v * v).powi(2));
        Some(self.h.transpose() * DMatrix::from_diagonal(&d) * &self.h)
    }
    fn curvature(&self) -> Curvature {
        Curvature::Nonconvex
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Likelihood {
    Gaussian,
    StudentT { nu: f64 },
}

#[derive(Clone, Debug)]
pub struct SparseMlConfig {
    pub agents: usize,
    pub dim: usize,
    /// Measurements per node.
    pub samples: usize,
    /// Nonzeros in `x₀`.
    pub sparsity: usize,
    pub lambda: f64,
    /// `K = [−bound, bound]^dim`.
    pub bound: f64,
    pub noise_std: f64,
    pub likelihood: Likelihood,
    pub seed: u64,
}

impl Default for SparseMlConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            dim: 20,
            samples: 10,
            sparsity: 4,
            lambda: 0.1,
            bound: 5.0,
            noise_std: 0.1,
            likelihood: Likelihood::Gaussian,
            seed: 0,
        }
    }
}

#[derive(Clone)]
pub struct SparseMlInstance {
    pub truth: DVector<f64>,
    pub problem: DistributedProblem,
    pub config: SparseMlConfig,
}

impl SparseMlInstance {
    /// One surrogate of the given family per node.
    pub fn surrogates(&self, kind: SurrogateKind, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        self.problem
            .costs()
            .iter()
            .map(|c| build_surrogate(c.clone(), kind.clone(), tau))
            .collect()
    }
}

/// `Σ_i f_i + λ‖x‖₁` over `K`, with `f_i` the supplied negative
/// log-likelihoods.
pub fn build_sparse_ml(
    oracles: Vec<Arc<dyn LocalCost>>,
    lambda: f64,
    set: Arc<dyn FeasibleSet>,
) -> Result<DistributedProblem, AppError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AppError::Invalid(format!("λ must be nonnegative (got {lambda})")));
    }
    Ok(DistributedProblem::new(oracles, Arc::new(L1Regularizer::new(lambda)), set)?)
}

/// Random linear-model instance with a sparse truth.
pub fn generate_sparse_ml(config: &SparseMlConfig) -> Result<SparseMlInstance, AppError> {
    let c = config;
    if c.agents == 0 || c.dim == 0 || c.samples == 0 || c.sparsity > c.dim {
        return Err(AppError::Invalid("sparse ML dimensions are inconsistent".into()));
    }
    if !(c.noise_std > 0.0 && c.bound > 0.0) {
        return Err(AppError::Invalid("noise_std and bound must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut truth = DVector::zeros(c.dim);
    for k in sample(&mut rng, c.dim, c.sparsity) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        truth[k] = sign * rng.random_range(0.5..c.bound.min(2.0).max(0.5 + 1e-9));
    }
    let student = match c.likelihood {
        Likelihood::StudentT { nu } => {
            Some(StudentT::new(nu).map_err(|e| AppError::Invalid(format!("Student-t ν: {e}")))?)
        }
        Likelihood::Gaussian => None,
    };
    let scale = 1.0 / (c.samples as f64).sqrt();
    let oracles: Vec<Arc<dyn LocalCost>> = (0..c.agents)
        .map(|_| {
            let h = DMatrix::from_fn(c.samples, c.dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let noise = DVector::from_fn(c.samples, |_, _| match &student {
                Some(t) => c.noise_std * t.sample(&mut rng),
                None => c.noise_std * rng.sample::<f64, _>(StandardNormal),
            });
            let phi = &h * &truth + noise;
            match c.likelihood {
                // ‖φ − Hx‖²/(2σ²) = ‖φ' − H'x‖² with both scaled by 1/(σ√2).
                Likelihood::Gaussian => {
                    let k = 1.0 / (c.noise_std * 2f64.sqrt());
                    Arc::new(LeastSquaresCost::new(h * k, phi * k)) as Arc<dyn LocalCost>
                }
                Likelihood::StudentT { nu } => Arc::new(StudentTCost::new(h, phi, nu, c.noise_std)),
            }
        })
        .collect();
    let problem = build_sparse_ml(oracles, c.lambda, Arc::new(BoxSet::uniform(c.dim, -c.bound, c.bound)))?;
    Ok(SparseMlInstance {
        truth,
        problem,
        config: c.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::checks::gradient_error;
    use crate::problem::ZeroCost;

    #[test]
    fn student_t_oracle_gradients() {
        let inst = generate_sparse_ml(&SparseMlConfig {
            likelihood: Likelihood::StudentT { nu: 3.0 },
            ..SparseMlConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let x = DVector::from_fn(20, |_, _| rng.random_range(-2.0..2.0));
            for c in inst.problem.costs() {
                let g = c.gradient(&x);
                assert!(gradient_error(c.as_ref(), &x) < 1e-6 * (1.0 + g.norm()));
            }
        }
    }

    #[test]
    fn flat_likelihood_leaves_the_prior() {
        let p = build_sparse_ml(
            vec![Arc::new(ZeroCost::new(3)), Arc::new(ZeroCost::new(3))],
            0.5,
            Arc::new(BoxSet::uniform(3, -1.0, 2.0)),
        )
        .unwrap();
        assert_eq!(p.stationarity_residual(&DVector::zeros(3)), 0.0);
        assert!(p.stationarity_residual(&DVector::from_element(3, 0.1)) > 0.0);
    }

    #[test]
    fn truth_is_sparse_and_feasible() {
        let inst = generate_sparse_ml(&SparseMlConfig::default()).unwrap();
        assert_eq!(inst.truth.iter().filter(|v| **v != 0.0).count(), 4);
        assert!(inst.problem.feasible().contains(&inst.truth, 0.0));
        assert!(generate_sparse_ml(&SparseMlConfig { sparsity: 30, ..SparseMlConfig::default() }).is_err());
    }
}
