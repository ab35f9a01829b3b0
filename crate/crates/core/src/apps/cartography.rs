//! Spectrum cartography: nodes estimate the power each source emits on each
//! frequency basis from noisy power spectral density samples.
//!
//! `f_i(x) = ‖φ_i − B_i x‖²`, `G(x) = λ 1ᵀx`, `K = [0, p_max]^{N_b·N_s}`.
//! Column `s·N_b + b` of `B_i` is `g_is ψ_b(f_k)` over the scanned channels
//! `f_k`, with path loss `g_is = 1/(1 + d_is²)` and rectangular,
//! non-overlapping bases `ψ_b` that tile the band.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{mean_square, noise_variance_for_min_snr, AppError};
use crate::problem::{BoxSet, DistributedProblem, LeastSquaresCost, LinearRegularizer, LocalCost};
use crate::surrogate::{KeepConvex, Linearize, Surrogate, SurrogateError};

#[derive(Clone, Debug)]
pub struct CartographyConfig {
    pub agents: usize,
    /// Source coordinates in meters.
    pub sources: Vec<[f64; 2]>,
    pub basis: usize,
    pub channels: usize,
    pub lambda: f64,
    pub p_max: f64,
    /// Side of the square deployment area in meters.
    pub side: f64,
    /// Scanned band in MHz.
    pub band: (f64, f64),
    /// Minimum per-node SNR in dB; `None` for noiseless samples.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for CartographyConfig {
    fn default() -> Self {
        Self {
            agents: 30,
            sources: vec![[2.5, 2.5], [7.5, 7.5]],
            basis: 10,
            channels: 30,
            lambda: 1e-3,
            p_max: 5.0,
            side: 10.0,
            band: (15.0, 30.0),
            snr_db: Some(3.0),
            seed: 0,
        }
    }
}

pub fn path_loss(distance: f64) -> f64 {
    1.0 / (1.0 + distance * distance)
}

/// `Ψ[k, b] = 1` when channel `k` falls in basis `b`. Channels sit at the
/// centers of `channels` equal slices of the band; bases split it into
/// `basis` equal slices.
pub fn basis_matrix(basis: usize, channels: usize, band: (f64, f64)) -> DMatrix<f64> {
    let width = band.1 - band.0;
    DMatrix::from_fn(channels, basis, |k, b| {
        let f = band.0 + (k as f64 + 0.5) * width / channels as f64;
        let slot = (((f - band.0) / (width / basis as f64)).floor() as usize).min(basis - 1);
        if slot == b {
            1.0
        } else {
            0.0
        }
    })
}

/// Emission pattern: even-numbered sources spread 1 W evenly over the bases in
/// `[0.1, 0.4)` of the band, odd-numbered ones spread 0.5 W over `[0.5, 0.9)`.
/// With ten bases these are bases 2–4 and 6–9.
pub fn truth_pattern(sources: usize, basis: usize) -> DVector<f64> {
    let mut x = DVector::zeros(sources * basis);
    for s in 0..sources {
        let (from, to, budget) = if s % 2 == 0 { (0.1, 0.4, 1.0) } else { (0.5, 0.9, 0.5) };
        let start = ((from * basis as f64).round() as usize).min(basis - 1);
        let end = ((to * basis as f64).round() as usize).clamp(start + 1, basis);
        let share = budget / (end - start) as f64;
        for b in start..end {
            x[s * basis + b] = share;
        }
    }
    x
}

#[derive(Clone)]
pub struct CartographyInstance {
    pub positions: Vec<[f64; 2]>,
    pub truth: DVector<f64>,
    pub noise_variance: f64,
    pub problem: DistributedProblem,
    pub config: CartographyConfig,
    costs: Vec<Arc<LeastSquaresCost>>,
}

impl CartographyInstance {
    pub fn costs(&self) -> &[Arc<LeastSquaresCost>] {
        &self.costs
    }

    /// `‖φ_i − B_i x‖² + τ/2 ‖x − a‖²`.
    pub fn keep_convex_surrogates(&self, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        self.costs
            .iter()
            .map(|c| Ok(Arc::new(KeepConvex::new(c.clone(), tau)?) as Arc<dyn Surrogate>))
            .collect()
    }

    pub fn l_surrogates(&self, tau: f64) -> Result<Vec<Arc<dyn Surrogate>>, SurrogateError> {
        self.costs
            .iter()
            .map(|c| Ok(Arc::new(Linearize::new(c.clone(), tau)?) as Arc<dyn Surrogate>))
            .collect()
    }

    pub fn signal_powers(&self) -> Vec<f64> {
        self.costs
            .iter()
            .map(|c| mean_square((c.regressors() * &self.truth).as_slice()))
            .collect()
    }

    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "app = cartography");
        let _ = writeln!(s, "seed = {}", self.config.seed);
        let _ = writeln!(s, "noise_variance = {:e}", self.noise_variance);
        let truth: Vec<String> = self.truth.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "truth = {}", truth.join(" "));
        for (i, p) in self.positions.iter().enumerate() {
            let _ = writeln!(s, "node {i} position = {:e} {:e}", p[0], p[1]);
        }
        s
    }
}

pub fn build_cartography(config: &CartographyConfig) -> Result<CartographyInstance, AppError> {
    let c = config;
    if c.agents == 0 || c.sources.is_empty() || c.basis == 0 || c.channels == 0 {
        return Err(AppError::Invalid("cartography dimensions must be positive".into()));
    }
    if !(c.lambda >= 0.0 && c.lambda.is_finite()) {
        return Err(AppError::Invalid(format!("λ must be nonnegative (got {})", c.lambda)));
    }
    if !(c.p_max > 0.0 && c.side > 0.0 && c.band.0 < c.band.1) {
        return Err(AppError::Invalid("p_max, side, and the band must be nonempty".into()));
    }
    let dim = c.sources.len() * c.basis;
    let psi = basis_matrix(c.basis, c.channels, c.band);
    let truth = truth_pattern(c.sources.len(), c.basis);
    if truth.iter().any(|v| *v > c.p_max) {
        return Err(AppError::Invalid("the emission pattern exceeds p_max".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let positions: Vec<[f64; 2]> = (0..c.agents)
        .map(|_| [rng.random_range(0.0..c.side), rng.random_range(0.0..c.side)])
        .collect();
    let regressors: Vec<DMatrix<f64>> = positions
        .iter()
        .map(|p| {
            let mut b = DMatrix::zeros(c.channels, dim);
            for (s, src) in c.sources.iter().enumerate() {
                let g = path_loss(((p[0] - src[0]).powi(2) + (p[1] - src[1]).powi(2)).sqrt());
                b.view_mut((0, s * c.basis), (c.channels, c.basis)).copy_from(&(&psi * g));
            }
            b
        })
        .collect();
    let clean: Vec<DVector<f64>> = regressors.iter().map(|b| b * &truth).collect();
    let noise_variance = match c.snr_db {
        None => 0.0,
        Some(db) => {
            let powers: Vec<f64> = clean.iter().map(|y| mean_square(y.as_slice())).collect();
            noise_variance_for_min_snr(&powers, db)?
        }
    };
    let sd = noise_variance.sqrt();
    let costs: Vec<Arc<LeastSquaresCost>> = regressors
        .into_iter()
        .zip(clean)
        .map(|(b, y)| {
            let noisy = y.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal));
            Arc::new(LeastSquaresCost::new(b, noisy))
        })
        .collect();
    let dyn_costs: Vec<Arc<dyn LocalCost>> =
        costs.iter().map(|c| c.clone() as Arc<dyn LocalCost>).collect();
    let problem = DistributedProblem::new(
        dyn_costs,
        Arc::new(LinearRegularizer::uniform(dim, c.lambda)),
        Arc::new(BoxSet::uniform(dim, 0.0, c.p_max)),
    )?;
    Ok(CartographyInstance {
        positions,
        truth,
        noise_variance,
        problem,
        config: c.clone(),
        costs,
    })
}
