use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::state::{AgentState, NetworkState};
use super::step::{InexactSchedule, StepError, StepSizeRule};
use crate::graph::{GraphSchedule, WeightMatrix};
use crate::metrics::{disagreement, nmse, stationarity_gap, MetricRow};
use crate::problem::{sample_point, DistributedProblem, ZeroRegularizer};
use crate::surrogate::{Linearize, Subproblem, Surrogate, SurrogateError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("agent {agent} at iteration {iteration}: {source}")]
    Subproblem {
        agent: usize,
        iteration: usize,
        source: SurrogateError,
    },
    #[error("non-finite state at agent {agent}, iteration {iteration}")]
    NonFinite { agent: usize, iteration: usize },
}

/// Which distributed scheme to run.
#[derive(Clone)]
pub enum Algorithm {
    /// Surrogate minimization plus two consensus rounds per iteration. With an
    /// inexact schedule, subproblems are solved only to `ε_i[n]`.
    Next {
        surrogates: Vec<Arc<dyn Surrogate>>,
        inexact: Option<InexactSchedule>,
    },
    /// Projected gradient step plus one consensus round.
    DGradient,
}

impl Algorithm {
    /// Communication exchanges per agent per iteration.
    pub fn exchanges_per_iteration(&self) -> usize {
        match self {
            Algorithm::Next { .. } => 2,
            Algorithm::DGradient => 1,
        }
    }
}

/// Run parameters.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub iterations: usize,
    pub step: StepSizeRule,
    /// Seeds the initial points when `initial` is absent.
    pub seed: u64,
    /// A row is recorded every `cadence` iterations, plus the first and last.
    pub cadence: usize,
    /// Stop at the first recorded row with `J` at or below this value.
    pub stop_threshold: Option<f64>,
    pub initial: Option<Vec<DVector<f64>>>,
    pub truth: Option<DVector<f64>>,
    /// Solve the agents' subproblems on the rayon pool.
    pub parallel: bool,
    /// Compute the tracking error column (costs `I²` gradient evaluations per row).
    pub track_error: bool,
}

impl RunConfig {
    pub fn new(iterations: usize, step: StepSizeRule) -> Self {
        Self {
            iterations,
            step,
            seed: 0,
            cadence: 1,
            stop_threshold: None,
            initial: None,
            truth: None,
            parallel: false,
            track_error: true,
        }
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub rows: Vec<MetricRow>,
    pub final_state: NetworkState,
    pub iterations_run: usize,
    pub stopped_early: bool,
    pub elapsed: Duration,
}

impl RunTrace {
    /// First recorded row with `J ≤ threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.j <= threshold)
    }

    pub fn last(&self) -> &MetricRow {
        self.rows.last().expect("a trace has at least one row")
    }
}

fn map_agents<T: Send>(
    parallel: bool,
    n: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Vec<T> {
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// One NEXT iteration.
///
/// 1. Every agent computes `x̃_i = argmin Ũ_i` (or an `ε_i`-accurate point).
/// 2. `z_i = x_i + α (x̃_i − x_i)`.
/// 3. `x_i⁺ = Σ_j w_ij z_j`.
/// 4. `y_i⁺ = Σ_j w_ij y_j + ∇f_i(x_i⁺) − ∇f_i(x_i)`.
/// 5. `π̃_i⁺ = I·y_i⁺ − ∇f_i(x_i⁺)`.
///
/// Step 4 needs every agent's step 3, so the phases run in bulk.
#[allow(clippy::too_many_arguments)]
pub fn next_step(
    problem: &DistributedProblem,
    state: &NetworkState,
    w: &WeightMatrix,
    alpha: f64,
    surrogates: &[Arc<dyn Surrogate>],
    eps: Option<&[f64]>,
    iteration: usize,
    parallel: bool,
) -> Result<NetworkState, SolverError> {
    let agents = state.agent_count();
    let reg = problem.regularizer().as_ref();
    let set = problem.feasible().as_ref();

    let best: Vec<Result<DVector<f64>, SolverError>> = map_agents(parallel, agents, |i| {
        let a = &state.agents[i];
        let sub = Subproblem::new(surrogates[i].as_ref(), &a.x, &a.pi, reg, set);
        let out = match eps {
            None => sub.solve_exact(),
            Some(e) => sub.solve_inexact(e[i]).map(|r| r.solution),
        };
        out.map_err(|source| SolverError::Subproblem {
            agent: i,
            iteration,
            source,
        })
    });
    let mut z = Vec::with_capacity(agents);
    for (a, xt) in state.agents.iter().zip(best) {
        let xt = xt?;
        z.push(&a.x + (xt - &a.x) * alpha);
    }

    let x_next = w.mix(&z);
    let ys: Vec<DVector<f64>> = state.agents.iter().map(|a| a.y.clone()).collect();
    let scale = agents as f64;
    let next = map_agents(parallel, agents, |i| {
        let x = x_next[i].clone();
        let grad = problem.cost(i).gradient(&x);
        let y = w.mix_row(i, &ys) + &grad - &state.agents[i].grad;
        let pi = &y * scale - &grad;
        AgentState { x, y, pi, grad }
    });
    Ok(NetworkState { agents: next })
}

/// One gradient-consensus iteration: `z_i = prox(x_i − α∇f_i(x_i))`, then
/// `x_i⁺ = Σ_j w_ij z_j`.
///
/// Each agent carries a `1/I` share of `G`, so the prox is that of
/// `(α/I) G + ι_K`; with `G = 0` it is the projection onto `K`.
pub fn dgradient_step(
    problem: &DistributedProblem,
    state: &NetworkState,
    w: &WeightMatrix,
    alpha: f64,
    parallel: bool,
) -> NetworkState {
    let agents = state.agent_count();
    let share = alpha / agents as f64;
    let reg = problem.regularizer();
    let set = problem.feasible();
    let z = map_agents(parallel, agents, |i| {
        let a = &state.agents[i];
        reg.prox(&(&a.x - &a.grad * alpha), share, set.as_ref())
    });
    let x_next = w.mix(&z);
    let next = map_agents(parallel, agents, |i| {
        let x = x_next[i].clone();
        let grad = problem.cost(i).gradient(&x);
        AgentState {
            y: grad.clone(),
            pi: DVector::zeros(x.len()),
            x,
            grad,
        }
    });
    NetworkState { agents: next }
}

/// Checks that the subproblem of the linearized surrogate with `G = 0`,
/// solved by the generic iterative solver, equals
/// `Π_K(x_i − (∇f_i(x_i) + π̃_i)/τ)` within `1e-10`.
pub fn next_l_equivalence_check(
    problem: &DistributedProblem,
    agent: usize,
    state: &AgentState,
    tau: f64,
) -> bool {
    let Ok(s) = Linearize::new(problem.cost(agent).clone(), tau) else {
        return false;
    };
    let set = problem.feasible().as_ref();
    let sub = Subproblem::new(&s, &state.x, &state.pi, &ZeroRegularizer, set);
    let closed = set.project(&(&state.x - (problem.cost(agent).gradient(&state.x) + &state.pi) / tau));
    let Ok(iterative) = sub.solve_iterative(1e-13 * (1.0 + state.x.norm()), None, true) else {
        return false;
    };
    let Ok(exact) = sub.solve_exact() else {
        return false;
    };
    (&iterative.solution - &closed).amax() <= 1e-10 && (&exact - &closed).amax() <= 1e-10
}

/// Drives one algorithm over a schedule and records metric rows.
pub struct Runner<'a> {
    problem: &'a DistributedProblem,
    schedule: &'a GraphSchedule,
    algorithm: Algorithm,
    config: RunConfig,
    state: NetworkState,
    steps: crate::solver::StepIter,
    n: usize,
}

impl<'a> Runner<'a> {
    pub fn new(
        problem: &'a DistributedProblem,
        schedule: &'a GraphSchedule,
        algorithm: Algorithm,
        config: RunConfig,
    ) -> Result<Self, SolverError> {
        config.step.validate()?;
        let agents = problem.agent_count();
        if schedule.agent_count() != agents {
            return Err(SolverError::Config(format!(
                "schedule has {} agents, problem has {agents}",
                schedule.agent_count()
            )));
        }
        if config.cadence == 0 {
            return Err(SolverError::Config("cadence must be at least 1".into()));
        }
        if let Algorithm::Next { surrogates, inexact } = &algorithm {
            if surrogates.len() != agents {
                return Err(SolverError::Config(format!(
                    "{} surrogates for {agents} agents",
                    surrogates.len()
                )));
            }
            if let Some(s) = surrogates.iter().find(|s| s.dim() != problem.dim()) {
                return Err(SolverError::Config(format!(
                    "surrogate dimension {} differs from problem dimension {}",
                    s.dim(),
                    problem.dim()
                )));
            }
            if let Some(e) = inexact {
                if e.constants().len() != agents {
                    return Err(SolverError::Config("one accuracy constant per agent".into()));
                }
                e.validate(&config.step)?;
            }
        }
        let xs = match &config.initial {
            Some(xs) => {
                if xs.len() != agents || xs.iter().any(|x| x.len() != problem.dim()) {
                    return Err(SolverError::Config("initial points have the wrong shape".into()));
                }
                xs.iter().map(|x| problem.feasible().project(x)).collect()
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                (0..agents)
                    .map(|_| sample_point(problem.feasible().as_ref(), &mut rng))
                    .collect()
            }
        };
        if let Some(t) = &config.truth {
            nmse(t, t).map_err(|e| SolverError::Config(format!("truth: {e}")))?;
        }
        let state = NetworkState::initialize(problem, xs);
        let steps = config.step.iter();
        Ok(Self {
            problem,
            schedule,
            algorithm,
            config,
            state,
            steps,
            n: 0,
        })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn iteration(&self) -> usize {
        self.n
    }

    /// Advances one iteration.
    pub fn step(&mut self) -> Result<(), SolverError> {
        let alpha = self.steps.next().expect("infinite sequence");
        let w = self.schedule.weights(self.n);
        let parallel = self.config.parallel;
        let next = match &self.algorithm {
            Algorithm::Next { surrogates, inexact } => {
                let eps: Option<Vec<f64>> = inexact
                    .as_ref()
                    .map(|e| (0..self.state.agent_count()).map(|i| e.eps(i, alpha)).collect());
                next_step(
                    self.problem,
                    &self.state,
                    w,
                    alpha,
                    surrogates,
                    eps.as_deref(),
                    self.n,
                    parallel,
                )?
            }
            Algorithm::DGradient => dgradient_step(self.problem, &self.state, w, alpha, parallel),
        };
        self.n += 1;
        if let Some(agent) = next.first_non_finite() {
            return Err(SolverError::NonFinite {
                agent,
                iteration: self.n,
            });
        }
        self.state = next;
        Ok(())
    }

    /// Metrics of the current state.
    pub fn row(&self) -> MetricRow {
        let xs = self.state.xs();
        let x_bar = self.state.x_bar();
        let tracks = matches!(self.algorithm, Algorithm::Next { .. }) && self.config.track_error;
        MetricRow {
            n: self.n,
            comm: self.n * self.algorithm.exchanges_per_iteration(),
            j: stationarity_gap(self.problem, &x_bar),
            d: disagreement(&xs),
            nmse: self.config.truth.as_ref().and_then(|t| nmse(&x_bar, t).ok()),
            u: self.problem.objective(&x_bar),
            track_err: tracks.then(|| self.state.max_tracking_error(self.problem)),
        }
    }

    /// Runs to the iteration budget or the stop threshold.
    pub fn run(mut self) -> Result<RunTrace, SolverError> {
        let start = Instant::now();
        let mut rows = vec![self.row()];
        let threshold = self.config.stop_threshold;
        let hit = |r: &MetricRow| threshold.is_some_and(|t| r.j <= t);
        let mut stopped_early = hit(&rows[0]) && self.config.iterations > 0;
        while !stopped_early && self.n < self.config.iterations {
            self.step()?;
            if self.n % self.config.cadence == 0 || self.n == self.config.iterations {
                let r = self.row();
                stopped_early = hit(&r) && self.n < self.config.iterations;
                rows.push(r);
            }
        }
        Ok(RunTrace {
            rows,
            iterations_run: self.n,
            final_state: self.state,
            stopped_early,
            elapsed: start.elapsed(),
        })
    }
}

/// Convenience wrapper around [`Runner`].
pub fn run(
    problem: &DistributedProblem,
    schedule: &GraphSchedule,
    algorithm: Algorithm,
    config: RunConfig,
) -> Result<RunTrace, SolverError> {
    Runner::new(problem, schedule, algorithm, config)?.run()
}
