use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::weights::{metropolis_weights, verify_doubly_stochastic, DEFAULT_TOL};
use super::{Digraph, GraphError, WeightMatrix};

/// How the weight matrices of a schedule relate to its snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightRule {
    /// Metropolis weights on the symmetrized snapshot; support is checked
    /// against the symmetrized edge set.
    Metropolis,
    /// User-supplied doubly stochastic matrices; support must match the
    /// directed snapshot exactly.
    Custom,
}

impl WeightRule {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightRule::Metropolis => "metropolis",
            WeightRule::Custom => "custom",
        }
    }
}

/// A periodic sequence of snapshots `G[n]` with mixing matrices `W[n]`.
///
/// Slot `n` of an infinite run uses entry `n mod period`. The period is a
/// multiple of the window `B`, so every aligned window `kB..(k+1)B−1` of the
/// infinite sequence repeats a window of the stored period.
#[derive(Clone, Debug)]
pub struct GraphSchedule {
    snapshots: Vec<Digraph>,
    weights: Vec<WeightMatrix>,
    window: usize,
    rule: WeightRule,
}

impl GraphSchedule {
    /// Time-invariant schedule with Metropolis weights.
    pub fn constant(snapshot: Digraph) -> Result<Self, GraphError> {
        Self::metropolis(vec![snapshot], 1)
    }

    pub fn metropolis(snapshots: Vec<Digraph>, window: usize) -> Result<Self, GraphError> {
        let weights = snapshots
            .iter()
            .map(|s| metropolis_weights(s, false))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(snapshots, weights, window, WeightRule::Metropolis)
    }

    /// Injection point for arbitrary doubly stochastic schedules.
    pub fn with_weights(
        snapshots: Vec<Digraph>,
        weights: Vec<WeightMatrix>,
        window: usize,
    ) -> Result<Self, GraphError> {
        Self::from_parts(snapshots, weights, window, WeightRule::Custom)
    }

    pub fn from_parts(
        snapshots: Vec<Digraph>,
        weights: Vec<WeightMatrix>,
        window: usize,
        rule: WeightRule,
    ) -> Result<Self, GraphError> {
        if window == 0 {
            return Err(GraphError::InvalidSchedule("window B must be at least 1".into()));
        }
        if snapshots.is_empty() || snapshots.len() != weights.len() {
            return Err(GraphError::InvalidSchedule(format!(
                "{} snapshots but {} weight matrices",
                snapshots.len(),
                weights.len()
            )));
        }
        if snapshots.len() % window != 0 {
            return Err(GraphError::InvalidSchedule(format!(
                "period {} is not a multiple of the window {window}",
                snapshots.len()
            )));
        }
        let agents = snapshots[0].agent_count();
        for (n, (s, w)) in snapshots.iter().zip(&weights).enumerate() {
            if s.agent_count() != agents || w.agent_count() != agents {
                return Err(GraphError::AgentMismatch {
                    expected: agents,
                    found: s.agent_count().max(w.agent_count()),
                });
            }
            let support = match rule {
                WeightRule::Metropolis => s.symmetrized(),
                WeightRule::Custom => s.clone(),
            };
            if !verify_doubly_stochastic(w.entries(), Some(&support), DEFAULT_TOL) {
                return Err(GraphError::InvalidSchedule(format!(
                    "slot {n}: weights are not doubly stochastic on the snapshot support"
                )));
            }
        }
        let schedule = Self {
            snapshots,
            weights,
            window,
            rule,
        };
        schedule.check_window_connectivity()?;
        Ok(schedule)
    }

    pub fn agent_count(&self) -> usize {
        self.snapshots[0].agent_count()
    }

    pub fn period(&self) -> usize {
        self.snapshots.len()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn rule(&self) -> WeightRule {
        self.rule
    }

    pub fn snapshot(&self, n: usize) -> &Digraph {
        &self.snapshots[n % self.snapshots.len()]
    }

    pub fn weights(&self, n: usize) -> &WeightMatrix {
        &self.weights[n % self.weights.len()]
    }

    pub fn snapshots(&self) -> &[Digraph] {
        &self.snapshots
    }

    /// Union of the edge sets of slots `kB..(k+1)B−1`.
    pub fn window_union(&self, k: usize) -> Digraph {
        let start = k * self.window;
        (start + 1..start + self.window).fold(self.snapshot(start).clone(), |acc, n| {
            acc.union(self.snapshot(n)).expect("agent counts checked at construction")
        })
    }

    pub fn check_window_connectivity(&self) -> Result<(), GraphError> {
        for k in 0..self.period() / self.window {
            if let Some((from, to)) = self.window_union(k).unreachable_pair() {
                return Err(GraphError::WindowNotConnected { window: k, from, to });
            }
        }
        Ok(())
    }

    /// `P[n, l] = W[n] W[n−1] … W[l]`.
    pub fn transition_product(&self, n: usize, l: usize) -> TransitionProduct {
        assert!(n >= l, "transition product needs n >= l");
        let mut p = self.weights(l).entries().clone();
        for k in l + 1..=n {
            p = self.weights(k).entries() * p;
        }
        TransitionProduct { matrix: p, span: (n, l) }
    }
}

/// `P[n, l]` together with its index span.
#[derive(Clone, Debug)]
pub struct TransitionProduct {
    pub matrix: DMatrix<f64>,
    pub span: (usize, usize),
}

impl TransitionProduct {
    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        verify_doubly_stochastic(&self.matrix, None, tol)
    }
}

/// Builds a B-connected schedule from a strongly connected base graph.
///
/// Within every window of `window` consecutive slots, the base edges are
/// shuffled with a seeded generator and dealt round-robin to the slots. Each
/// window therefore covers every base edge, and its union equals the base
/// graph. `horizon` is rounded up to a multiple of the window. With
/// `window = 1`, every slot equals the base graph.
pub fn generate_b_connected_schedule(
    base: &Digraph,
    window: usize,
    horizon: usize,
    seed: u64,
) -> Result<GraphSchedule, GraphError> {
    base.check_strongly_connected()?;
    if window == 0 {
        return Err(GraphError::InvalidSchedule("window B must be at least 1".into()));
    }
    let windows = horizon.max(1).div_ceil(window);
    let agents = base.agent_count();
    let base_edges: Vec<(usize, usize)> = base.edges().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = Vec::with_capacity(windows * window);
    for _ in 0..windows {
        if window == 1 {
            snapshots.push(base.clone());
            continue;
        }
        let mut edges = base_edges.clone();
        edges.shuffle(&mut rng);
        let mut slots = vec![Vec::new(); window];
        for (k, e) in edges.into_iter().enumerate() {
            slots[k % window].push(e);
        }
        for slot in slots {
            snapshots.push(Digraph::new(agents, slot)?);
        }
    }
    GraphSchedule::metropolis(snapshots, window)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `e[n] = ‖P[n, l] − (1/I) 1 1ᵀ‖₂` for `n = l..=n_max`.
pub fn transition_decay_profile(schedule: &GraphSchedule, l: usize, n_max: usize) -> Vec<f64> {
    assert!(l <= n_max, "profile needs l <= n_max");
    let i = schedule.agent_count();
    let avg = DMatrix::from_element(i, i, 1.0 / i as f64);
    let mut p = schedule.weights(l).entries().clone();
    let mut out = Vec::with_capacity(n_max - l + 1);
    out.push(spectral_norm(&(&p - &avg)));
    for n in l + 1..=n_max {
        p = schedule.weights(n).entries() * p;
        out.push(spectral_norm(&(&p - &avg)));
    }
    out
}

/// Geometric envelope `e[n] ≤ c ρ^{n−l+1}` fitted to a decay profile.
#[derive(Clone, Copy, Debug)]
pub struct DecayFit {
    pub c: f64,
    pub rho: f64,
    pub samples: usize,
}

impl DecayFit {
    pub fn bound(&self, offset: usize) -> f64 {
        self.c * self.rho.powi(offset as i32 + 1)
    }
}

/// Values at or below this level are round-off and excluded from the fit.
pub const DECAY_NOISE_FLOOR: f64 = 1e-13;

/// Fits `ln e[k] ≈ ln c + (k+1) ln ρ` by least squares over offsets
/// `from..=to` (offset `k` is `n − l`). `c` is then raised until the envelope
/// dominates every sample in range with 5% relative slack. Samples at the
/// round-off floor are dropped. If fewer than two remain, the product has
/// already collapsed to the averaging matrix, and the fit is `ρ = 0`.
pub fn fit_geometric_envelope(profile: &[f64], from: usize, to: usize) -> DecayFit {
    let to = to.min(profile.len().saturating_sub(1));
    let pts: Vec<(f64, f64)> = (from..=to)
        .filter(|&k| profile[k] > DECAY_NOISE_FLOOR)
        .map(|k| ((k + 1) as f64, profile[k].ln()))
        .collect();
    if pts.len() < 2 {
        let c = (from..=to).map(|k| profile[k]).fold(0.0, f64::max);
        return DecayFit { c, rho: 0.0, samples: pts.len() };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rho = slope.exp();
    let c = pts
        .iter()
        .map(|&(t, ly)| (ly - slope * t).exp())
        .fold(0.0, f64::max)
        * 1.05;
    DecayFit { c, rho, samples: pts.len() }
}
