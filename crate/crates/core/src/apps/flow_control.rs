//! Flow control with inelastic (sigmoidal) sources.
//!
//! Source `i` sends at rate `x_i ∈ [m_i, M_i]` over the links of its path and
//! earns `σ(α_i x_i + β_i)`. Link loads may not exceed capacities. The
//! maximization of the total utility is posed as the minimization of
//! `Σ_i f_i(x) = −Σ_i σ(α_i x_i + β_i)`; every agent keeps a copy of the whole
//! rate vector.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AppError;
use crate::problem::{BoxSet, Curvature, DistributedProblem, LocalCost, Polyhedron, ZeroRegularizer};
use crate::surrogate::{Linearize, Surrogate, SurrogateError};

/// `σ(αt + β)` and its split `h − g` into convex parts,
/// `h(t) = e^{αt+β}` and `g(t) = e^{2(αt+β)} / (1 + e^{αt+β})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sigmoid {
    pub alpha: f64,
    pub beta: f64,
}

impl Sigmoid {
    fn s(&self, t: f64) -> f64 {
        self.alpha * t + self.beta
    }

    pub fn value(&self, t: f64) -> f64 {
        1.0 / (1.0 + (-self.s(t)).exp())
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let v = self.value(t);
        self.alpha * v * (1.0 - v)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let v = self.value(t);
        self.alpha * self.alpha * v * (1.0 - v) * (1.0 - 2.0 * v)
    }

    pub fn h(&self, t: f64) -> f64 {
        self.s(t).exp()
    }

    pub fn h_prime(&self, t: f64) -> f64 {
        self.alpha * self.h(t)
    }

    pub fn g(&self, t: f64) -> f64 {
        let e = self.s(t).exp();
        e * e / (1.0 + e)
    }

    /// `α e²ˢ(2 + eˢ) / (1 + eˢ)²`.
    pub fn g_prime(&self, t: f64) -> f64 {
        let e = self.s(t).exp();
        self.alpha * e * e * (2.0 + e) / ((1.0 + e) * (1.0 + e))
    }

    /// `α² e²ˢ(4 + 3eˢ + e²ˢ) / (1 + eˢ)³`.
    pub fn g_second(&self, t: f64) -> f64 {
        let e = self.s(t).exp();
        self.alpha * self.alpha * e * e * (4.0 + 3.0 * e + e * e) / (1.0 + e).powi(3)
    }
}

/// `f_i(x) = −σ_i(x_i)`.
#[derive(Clone, Debug)]
pub struct FlowCost {
    index: usize,
    dim: usize,
    sigmoid: Sigmoid,
}

impl FlowCost {
    pub fn new(index: usize, dim: usize, sigmoid: Sigmoid) -> Self {
        assert!(index < dim);
        Self { index, dim, sigmoid }
    }
}

impl LocalCost for FlowCost {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        -self.sigmoid.value(x[self.index])
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        g[self.index] = -self.sigmoid.derivative(x[self.index]);
        g
    }
    fn hessian(&self, x: &DVector<f64>) -> Option<nalgebra::DMatrix<f64>> {
        let mut h = nalgebra::DMatrix::zeros(self.dim, self.dim);
        h[(self.index, self.index)] = -self.sigmoid.second_derivative(x[self.index]);
        Some(h)
    }
    fn curvature(&self) -> Curvature {
        Curvature::Nonconvex
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        // |σ''| ≤ α²/(6√3).
        Some(self.sigmoid.alpha.powi(2) / (6.0 * 3f64.sqrt()))
    }
}

/// Keeps the convex part and linearizes the concave one:
/// `f̃_i(x; a) = g_i(x_i) − h_i(a_i) − h_i′(a_i)(x_i − a_i) + τ/2 ‖x − a‖²`.
#[derive(Clone, Debug)]
pub struct DcSurrogate {
    index: usize,
    dim: usize,
    sigmoid: Sigmoid,
    tau: f64,
}

impl DcSurrogate {
    pub fn new(index: usize, dim: usize, sigmoid: Sigmoid, tau: f64) -> Result<Self, SurrogateError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(SurrogateError::InvalidTau { kind: "dc", tau });
        }
        Ok(Self {
            index,
            dim,
            sigmoid,
            tau,
        })
    }
}

impl Surrogate for DcSurrogate {
    fn name(&self) -> &'static str {
        "dc"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn tau(&self) -> f64 {
        self.tau
    }
    fn value(&self, x: &DVector<f64>, a: &DVector<f64>) -> f64 {
        let (t, s) = (x[self.index], a[self.index]);
        let sg = &self.sigmoid;
        sg.g(t) - sg.h(s) - sg.h_prime(s) * (t - s) + 0.5 * self.tau * (x - a).norm_squared()
    }
    fn gradient(&self, x: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let mut g = (x - a) * self.tau;
        let (t, s) = (x[self.index], a[self.index]);
        g[self.index] += self.sigmoid.g_prime(t) - self.sigmoid.h_prime(s);
        g
    }
}

#[derive(Clone, Debug)]
pub struct FlowControlConfig {
    pub capacities: Vec<f64>,
    /// Links used by each source.
    pub paths: Vec<Vec<usize>>,
    pub min_rate: Vec<f64>,
    pub max_rate: Vec<f64>,
    /// Integer sigmoid parameters, `α_i > 0` and `β_i < 0`.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FlowControlConfig {
    /// Random topology: each source uses one to three links, rates lie in
    /// `[0, 5]`, `α_i ∈ {1, 2}`, `β_i ∈ {−4, …, −1}`, capacities in `[3, 8]`.
    pub fn random(sources: usize, links: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let capacities = (0..links).map(|_| rng.random_range(3.0..8.0)).collect();
        let paths = (0..sources)
            .map(|_| {
                let len = rng.random_range(1..=links.clamp(1, 3));
                let mut path: Vec<usize> = Vec::with_capacity(len);
                while path.len() < len {
                    let l = rng.random_range(0..links);
                    if !path.contains(&l) {
                        path.push(l);
                    }
                }
                path.sort_unstable();
                path
            })
            .collect();
        Self {
            capacities,
            paths,
            min_rate: vec![0.0; sources],
            max_rate: vec![5.0; sources],
            alpha: (0..sources).map(|_| rng.random_range(1..=2) as f64).collect(),
            beta: (0..sources).map(|_| -(rng.random_range(1..=4) as f64)).collect(),
        }
    }

    pub fn sources(&self) -> usize {
        self.paths.len()
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let n = self.sources();
        if n == 0 {
            return Err(AppError::Invalid("flow control needs at least one source".into()));
        }
        for (name, len) in [
            ("min_rate", self.min_rate.len()),
            ("max_rate", self.max_rate.len()),
            ("alpha", self.alpha.len()),
            ("beta", self.beta.len()),
        ] {
            if len != n {
                return Err(AppError::Invalid(format!("{name} has {len} entries for {n} sources")));
            }
        }
        for i in 0..n {
            if !(self.min_rate[i] <= self.max_rate[i]) {
                return Err(AppError::Invalid(format!("source {i}: m_i exceeds M_i")));
            }
            let (a, b) = (self.alpha[i], self.beta[i]);
            if !(a > 0.0 && a.fract() == 0.0 && b < 0.0 && b.fract() == 0.0) {
                return Err(AppError::Invalid(format!(
                    "source {i}: α must be a positive integer and β a negative integer (got {a}, {b})"
                )));
            }
            if let Some(l) = self.paths[i].iter().find(|l| **l >= self.capacities.len()) {
                return Err(AppError::Invalid(format!("source {i} uses unknown link {l}")));
            }
        }
        for (l, c) in self.capacities.iter().enumerate() {
            let floor: f64 = (0..n).filter(|i| self.paths[*i].contains(&l)).map(|i| self.min_rate[i]).sum();
            if floor > *c {
                return Err(AppError::Invalid(format!(
                    "infeasible capacities: link {l} carries at least {floor} but has capacity {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn sigmoid(&self, i: usize) -> Sigmoid {
        Sigmoid {
            alpha: self.alpha[i],
            beta: self.beta[i],
        }
    }
}

#[derive(Clone)]
pub struct FlowControlInstance {
    pub problem: DistributedProblem,
    pub config: FlowControlConfig,
}

impl FlowControlInstance {
    pub fn dc_surrogates(&self, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        let n = self.config.sources();
        (0..n)
            .map(|i| Ok(Arc::new(DcSurrogate::new(i, n, self.config.sigmoid(i), tau)?) as Arc<dyn Surrogate>))
            .collect()
    }

    pub fn l_surrogates(&self, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        self.problem
            .costs()
            .iter()
            .map(|c| Ok(Arc::new(Linearize::new(c.clone(), tau)?) as Arc<dyn Surrogate>))
            .collect()
    }

    /// Total utility `Σ_i σ_i(x_i)`.
    pub fn utility(&self, x: &DVector<f64>) -> f64 {
        -self.problem.sum_value(x)
    }
}

pub fn build_flow_control(config: &FlowControlConfig) -> Result<FlowControlInstance, AppError> {
    config.validate()?;
    let n = config.sources();
    let costs: Vec<Arc<dyn LocalCost>> = (0..n)
        .map(|i| Arc::new(FlowCost::new(i, n, config.sigmoid(i))) as Arc<dyn LocalCost>)
        .collect();
    let bounds = BoxSet::new(
        DVector::from_column_slice(&config.min_rate),
        DVector::from_column_slice(&config.max_rate),
    );
    let halfspaces = config
        .capacities
        .iter()
        .enumerate()
        .filter_map(|(l, c)| {
            let a = DVector::from_fn(n, |i, _| if config.paths[i].contains(&l) { 1.0 } else { 0.0 });
            (a.sum() > 0.0).then_some((a, *c))
        })
        .collect();
    let problem = DistributedProblem::new(
        costs,
        Arc::new(ZeroRegularizer),
        Arc::new(Polyhedron::new(bounds, halfspaces)),
    )?;
    Ok(FlowControlInstance {
        problem,
        config: config.clone(),
    })
}
