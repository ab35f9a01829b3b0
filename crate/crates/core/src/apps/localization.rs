//! Multi-target localization from noisy squared distances.
//!
//! Node `i` at `ω_i` measures `φ_it ≈ ‖x_t − ω_i‖²` for every target `t`, and
//! `f_i(x) = Σ_t (φ_it − ‖x_t − ω_i‖²)²`, a quartic in each target position.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{mean_square, noise_variance_for_min_snr, AppError};
use crate::problem::{
    BoxSet, Curvature, DistributedProblem, FeasibleSet, LocalCost, Regularizer, ZeroRegularizer,
};
use crate::surrogate::{
    Linearize, QuadraticHessian, QuadraticModel, Surrogate, SurrogateError,
};

/// Target positions of the reference experiment.
pub const REFERENCE_TARGETS: [[f64; 2]; 3] = [[0.03, 0.85], [0.86, 0.5], [0.6, 0.01]];

#[derive(Clone, Debug)]
pub struct LocalizationConfig {
    pub agents: usize,
    pub targets: usize,
    /// Target positions; defaults to the reference targets, then uniform draws.
    pub target_positions: Option<Vec<DVector<f64>>>,
    /// Node positions; defaults to uniform draws over the box.
    pub node_positions: Option<Vec<DVector<f64>>>,
    /// Minimum per-node SNR in dB; `None` for noiseless measurements.
    pub snr_db: Option<f64>,
    /// Every coordinate of every target lies in `[lower, upper]`.
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            agents: 30,
            targets: 3,
            target_positions: None,
            node_positions: None,
            snr_db: Some(-20.0),
            lower: 0.0,
            upper: 1.0,
            seed: 0,
        }
    }
}

/// `f_i(x) = Σ_t (φ_it − ‖x_t − ω_i‖²)²`.
#[derive(Clone, Debug)]
pub struct LocalizationCost {
    omega: DVector<f64>,
    phi: Vec<f64>,
    lipschitz: Option<f64>,
}

impl LocalizationCost {
    pub fn new(omega: DVector<f64>, phi: Vec<f64>) -> Self {
        Self {
            omega,
            phi,
            lipschitz: None,
        }
    }

    /// Records a Hessian bound valid on `[lower, upper]^dim`.
    pub fn with_box(mut self, lower: f64, upper: f64) -> Self {
        let reach: f64 = self
            .omega
            .iter()
            .map(|w| (w - lower).powi(2).max((upper - w).powi(2)))
            .sum();
        let phi_max = self.phi.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
        self.lipschitz = Some(4.0 * (phi_max + reach) + 8.0 * reach);
        self
    }

    pub fn position(&self) -> &DVector<f64> {
        &self.omega
    }

    pub fn measurements(&self) -> &[f64] {
        &self.phi
    }

    fn p(&self) -> usize {
        self.omega.len()
    }

    fn block(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        x.rows(t * self.p(), self.p()).into_owned()
    }
}

impl LocalCost for LocalizationCost {
    fn dim(&self) -> usize {
        self.p() * self.phi.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.phi.len())
            .map(|t| {
                let r = self.phi[t] - (self.block(x, t) - &self.omega).norm_squared();
                r * r
            })
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let mut g = DVector::zeros(self.dim());
        for t in 0..self.phi.len() {
            let d = self.block(x, t) - &self.omega;
            let r = self.phi[t] - d.norm_squared();
            g.rows_mut(t * p, p).copy_from(&(d * (-4.0 * r)));
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.p();
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for t in 0..self.phi.len() {
            let d = self.block(x, t) - &self.omega;
            let r = self.phi[t] - d.norm_squared();
            let blk = &d * d.transpose() * 8.0 - DMatrix::identity(p, p) * (4.0 * r);
            h.view_mut((t * p, t * p), (p, p)).copy_from(&blk);
        }
        Some(h)
    }

    fn curvature(&self) -> Curvature {
        Curvature::Nonconvex
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Keeps the convex first and second order terms of each summand and
/// linearizes the rest:
///
/// `f̃_i(x; a) = Σ_t x_tᵀ A x_t − b_tᵀ(x_t − a_t) + τ/2 ‖x_t − a_t‖²`
///
/// with `A = 4ωωᵀ + 2‖ω‖² I` and
/// `b_t = 4‖ω‖²ω − 4(‖a_t‖² − φ_t)(a_t − ω) + 8(ωᵀa_t) a_t`.
#[derive(Clone, Debug)]
pub struct LocalizationSurrogate {
    cost: Arc<LocalizationCost>,
    tau: f64,
    a: DMatrix<f64>,
    /// `2A + τI`, the Hessian of each target block.
    h: DMatrix<f64>,
}

impl LocalizationSurrogate {
    pub fn new(cost: Arc<LocalizationCost>, tau: f64) -> Result<Self, SurrogateError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(SurrogateError::InvalidTau {
                kind: "localization",
                tau,
            });
        }
        let w = &cost.omega;
        let p = w.len();
        let a = w * w.transpose() * 4.0 + DMatrix::identity(p, p) * (2.0 * w.norm_squared());
        let h = &a * 2.0 + DMatrix::identity(p, p) * tau;
        Ok(Self { cost, tau, a, h })
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `b_t` at the anchor block `a_t`.
    pub fn b(&self, anchor_block: &DVector<f64>, phi: f64) -> DVector<f64> {
        let w = &self.cost.omega;
        let ww = w.norm_squared();
        w * (4.0 * ww) - (anchor_block - w) * (4.0 * (anchor_block.norm_squared() - phi))
            + anchor_block * (8.0 * w.dot(anchor_block))
    }

    fn p(&self) -> usize {
        self.cost.p()
    }

    fn targets(&self) -> usize {
        self.cost.phi.len()
    }
}

impl Surrogate for LocalizationSurrogate {
    fn name(&self) -> &'static str {
        "localization-pl"
    }

    fn dim(&self) -> usize {
        self.cost.dim()
    }

    fn tau(&self) -> f64 {
        self.tau
    }

    fn modulus(&self) -> f64 {
        self.tau + 4.0 * self.cost.omega.norm_squared()
    }

    fn value(&self, x: &DVector<f64>, anchor: &DVector<f64>) -> f64 {
        (0..self.targets())
            .map(|t| {
                let xt = self.cost.block(x, t);
                let at = self.cost.block(anchor, t);
                let diff = &xt - &at;
                xt.dot(&(&self.a * &xt)) - self.b(&at, self.cost.phi[t]).dot(&diff)
                    + 0.5 * self.tau * diff.norm_squared()
            })
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>, anchor: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let mut g = DVector::zeros(self.dim());
        for t in 0..self.targets() {
            let xt = self.cost.block(x, t);
            let at = self.cost.block(anchor, t);
            let gt = &self.a * &xt * 2.0 - self.b(&at, self.cost.phi[t]) + (&xt - &at) * self.tau;
            g.rows_mut(t * p, p).copy_from(&gt);
        }
        g
    }

    fn quadratic(&self, anchor: &DVector<f64>) -> Option<QuadraticModel> {
        let p = self.p();
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for t in 0..self.targets() {
            h.view_mut((t * p, t * p), (p, p)).copy_from(&self.h);
        }
        Some(QuadraticModel {
            hessian: QuadraticHessian::Dense(h),
            gradient: self.gradient(anchor, anchor),
        })
    }

    fn smoothness(&self, _anchor: &DVector<f64>) -> Option<f64> {
        Some(self.tau + 12.0 * self.cost.omega.norm_squared())
    }

    /// Per target, minimizes `½ uᵀ(2A + τI)u − c_tᵀu` with
    /// `c_t = b_t − π̃_t − g_t + τ a_t` (`g` the weights of a linear `G`) over
    /// the target's box: the unconstrained point when it is feasible, otherwise
    /// the best feasible minimizer over the faces of the box.
    fn best_response(
        &self,
        anchor: &DVector<f64>,
        pi: &DVector<f64>,
        regularizer: &dyn Regularizer,
        set: &dyn FeasibleSet,
    ) -> Option<DVector<f64>> {
        if !set.coordinatewise() {
            return None;
        }
        let lin = regularizer.linear_part(self.dim())?;
        let (lo, hi) = set.bounding_box();
        let p = self.p();
        let chol = self.h.clone().cholesky()?;
        let mut out = DVector::zeros(self.dim());
        for t in 0..self.targets() {
            let at = self.cost.block(anchor, t);
            let c = self.b(&at, self.cost.phi[t]) - pi.rows(t * p, p) - lin.rows(t * p, p)
                + &at * self.tau;
            let lo_t = lo.rows(t * p, p).into_owned();
            let hi_t = hi.rows(t * p, p).into_owned();
            let free = chol.solve(&c);
            let u = if in_box(&free, &lo_t, &hi_t) {
                free
            } else {
                box_faces_minimizer(&self.h, &c, &lo_t, &hi_t)?
            };
            out.rows_mut(t * p, p).copy_from(&u);
        }
        Some(out)
    }
}

fn in_box(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> bool {
    u.iter().zip(lo.iter().zip(hi.iter())).all(|(x, (l, h))| x >= l && x <= h)
}

/// Minimizes `½ uᵀHu − cᵀu` over `[lo, hi]` by solving the restriction to
/// every face (each coordinate free, at its lower bound, or at its upper bound)
/// and keeping the best feasible one. Meant for the small blocks here (`3^p`
/// faces).
fn box_faces_minimizer(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Option<DVector<f64>> {
    let p = c.len();
    let slack = 1e-12 * (1.0 + c.amax());
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut state = vec![0u8; p];
    for code in 0..3usize.pow(p as u32) {
        let mut k = code;
        for s in state.iter_mut() {
            *s = (k % 3) as u8;
            k /= 3;
        }
        let mut u = DVector::zeros(p);
        let mut free = Vec::new();
        let mut finite = true;
        for j in 0..p {
            match state[j] {
                0 => free.push(j),
                1 => u[j] = lo[j],
                _ => u[j] = hi[j],
            }
            finite &= u[j].is_finite();
        }
        if !finite {
            continue;
        }
        if !free.is_empty() {
            let nf = free.len();
            let hff = DMatrix::from_fn(nf, nf, |r, s| h[(free[r], free[s])]);
            let rhs = DVector::from_fn(nf, |r, _| {
                let j = free[r];
                c[j] - (0..p).filter(|k| state[*k] != 0).map(|k| h[(j, k)] * u[k]).sum::<f64>()
            });
            let sol = hff.cholesky()?.solve(&rhs);
            for (r, &j) in free.iter().enumerate() {
                u[j] = sol[r];
            }
        }
        if (0..p).any(|j| u[j] < lo[j] - slack || u[j] > hi[j] + slack) {
            continue;
        }
        let u = DVector::from_fn(p, |j, _| u[j].max(lo[j]).min(hi[j]));
        let obj = 0.5 * u.dot(&(h * &u)) - c.dot(&u);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, u));
        }
    }
    best.map(|(_, u)| u)
}

/// A generated instance.
#[derive(Clone)]
pub struct LocalizationInstance {
    pub positions: Vec<DVector<f64>>,
    /// Stacked target positions `x₀`.
    pub truth: DVector<f64>,
    pub measurements: Vec<Vec<f64>>,
    pub noise_variance: f64,
    pub problem: DistributedProblem,
    pub config: LocalizationConfig,
    costs: Vec<Arc<LocalizationCost>>,
}

impl LocalizationInstance {
    pub fn costs(&self) -> &[Arc<LocalizationCost>] {
        &self.costs
    }

    /// Partial-linearization surrogates with closed-form best responses.
    pub fn pl_surrogates(&self, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        self.costs
            .iter()
            .map(|c| Ok(Arc::new(LocalizationSurrogate::new(c.clone(), tau)?) as Arc<dyn Surrogate>))
            .collect()
    }

    /// Fully linearized surrogates.
    pub fn l_surrogates(&self, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        self.costs
            .iter()
            .map(|c| Ok(Arc::new(Linearize::new(c.clone(), tau)?) as Arc<dyn Surrogate>))
            .collect()
    }

    /// Mean squared noiseless measurement of every node.
    pub fn signal_powers(&self) -> Vec<f64> {
        signal_powers(&self.positions, &self.truth)
    }

    /// Plain-text record of the generated instance.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "app = localization");
        let _ = writeln!(s, "seed = {}", self.config.seed);
        let _ = writeln!(s, "noise_variance = {:e}", self.noise_variance);
        let _ = writeln!(s, "truth = {}", join(self.truth.iter()));
        for (i, (w, phi)) in self.positions.iter().zip(&self.measurements).enumerate() {
            let _ = writeln!(s, "node {i} position = {} measurements = {}", join(w.iter()), join(phi.iter()));
        }
        s
    }
}

fn join<'a>(v: impl Iterator<Item = &'a f64>) -> String {
    v.map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn signal_powers(positions: &[DVector<f64>], truth: &DVector<f64>) -> Vec<f64> {
    let p = positions[0].len();
    let targets = truth.len() / p;
    positions
        .iter()
        .map(|w| {
            let clean: Vec<f64> = (0..targets)
                .map(|t| (truth.rows(t * p, p) - w).norm_squared())
                .collect();
            mean_square(&clean)
        })
        .collect()
}

pub fn build_localization(config: &LocalizationConfig) -> Result<LocalizationInstance, AppError> {
    if config.agents == 0 || config.targets == 0 {
        return Err(AppError::Invalid("localization needs at least one node and one target".into()));
    }
    if !(config.lower < config.upper) {
        return Err(AppError::Invalid("the target box is empty".into()));
    }
    let p = config
        .target_positions
        .as_ref()
        .and_then(|t| t.first().map(|v| v.len()))
        .or_else(|| config.node_positions.as_ref().and_then(|n| n.first().map(|v| v.len())))
        .unwrap_or(2);
    if !(2..=3).contains(&p) {
        return Err(AppError::Invalid(format!("positions must be 2-D or 3-D, got {p}-D")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        DVector::from_fn(p, |_, _| rng.random_range(config.lower..config.upper))
    };

    let positions = match &config.node_positions {
        Some(ps) => {
            if ps.len() != config.agents || ps.iter().any(|w| w.len() != p) {
                return Err(AppError::Invalid("node positions do not match the agent count".into()));
            }
            ps.clone()
        }
        None => (0..config.agents).map(|_| draw(&mut rng)).collect(),
    };
    let targets: Vec<DVector<f64>> = match &config.target_positions {
        Some(ts) => {
            if ts.len() != config.targets || ts.iter().any(|t| t.len() != p) {
                return Err(AppError::Invalid("target positions do not match the target count".into()));
            }
            ts.clone()
        }
        None => (0..config.targets)
            .map(|t| match REFERENCE_TARGETS.get(t) {
                Some(xy) if p == 2 => DVector::from_column_slice(xy),
                _ => draw(&mut rng),
            })
            .collect(),
    };
    if targets.iter().any(|t| t.iter().any(|c| *c < config.lower || *c > config.upper)) {
        return Err(AppError::Invalid("a target lies outside the box".into()));
    }
    let mut truth = DVector::zeros(p * config.targets);
    for (t, x) in targets.iter().enumerate() {
        truth.rows_mut(t * p, p).copy_from(x);
    }

    let noise_variance = match config.snr_db {
        None => 0.0,
        Some(db) => noise_variance_for_min_snr(&signal_powers(&positions, &truth), db)?,
    };
    let sd = noise_variance.sqrt();
    let measurements: Vec<Vec<f64>> = positions
        .iter()
        .map(|w| {
            targets
                .iter()
                .map(|x| {
                    let e: f64 = rng.sample(StandardNormal);
                    (x - w).norm_squared() + sd * e
                })
                .collect()
        })
        .collect();

    let costs: Vec<Arc<LocalizationCost>> = positions
        .iter()
        .zip(&measurements)
        .map(|(w, phi)| {
            Arc::new(LocalizationCost::new(w.clone(), phi.clone()).with_box(config.lower, config.upper))
        })
        .collect();
    let dyn_costs: Vec<Arc<dyn LocalCost>> =
        costs.iter().map(|c| c.clone() as Arc<dyn LocalCost>).collect();
    let problem = DistributedProblem::new(
        dyn_costs,
        Arc::new(ZeroRegularizer),
        Arc::new(BoxSet::uniform(p * config.targets, config.lower, config.upper)),
    )?;
    Ok(LocalizationInstance {
        positions,
        truth,
        measurements,
        noise_variance,
        problem,
        config: config.clone(),
        costs,
    })
}
