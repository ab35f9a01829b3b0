use nalgebra::DVector;

use crate::problem::DistributedProblem;
use crate::util::{all_finite, mean};

/// Local variables of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    /// Local estimate `x_i`.
    pub x: DVector<f64>,
    /// Gradient tracker `y_i`.
    pub y: DVector<f64>,
    /// `π̃_i = I·y_i − ∇f_i(x_i)`.
    pub pi: DVector<f64>,
    /// `∇f_i(x_i)`.
    pub grad: DVector<f64>,
}

/// All agents at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
}

impl NetworkState {
    /// `y_i = ∇f_i(x_i)` and `π̃_i = I·y_i − ∇f_i(x_i)` at the given points.
    pub fn initialize(problem: &DistributedProblem, xs: Vec<DVector<f64>>) -> Self {
        let agents = problem.agent_count() as f64;
        let agents = xs
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let grad = problem.cost(i).gradient(&x);
                let y = grad.clone();
                let pi = &y * agents - &grad;
                AgentState { x, y, pi, grad }
            })
            .collect();
        Self { agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn xs(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.x.clone()).collect()
    }

    pub fn x_bar(&self) -> DVector<f64> {
        mean(&self.xs())
    }

    /// First agent whose state holds a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.agents.iter().position(|a| {
            !(all_finite(&a.x) && all_finite(&a.y) && all_finite(&a.pi) && all_finite(&a.grad))
        })
    }

    /// `‖(1/I) Σ y_i − (1/I) Σ ∇f_i(x_i)‖` and `‖(1/I) Σ ∇f_i(x_i)‖`, with the
    /// gradients recomputed from the costs.
    pub fn conservation_gap(&self, problem: &DistributedProblem) -> (f64, f64) {
        let ys: Vec<_> = self.agents.iter().map(|a| a.y.clone()).collect();
        let gs: Vec<_> = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| problem.cost(i).gradient(&a.x))
            .collect();
        let g_bar = mean(&gs);
        ((mean(&ys) - &g_bar).norm(), g_bar.norm())
    }

    /// `max_i ‖y_i − (1/I) Σ_j ∇f_j(x_i)‖`.
    pub fn max_tracking_error(&self, problem: &DistributedProblem) -> f64 {
        let agents = problem.agent_count() as f64;
        self.agents
            .iter()
            .map(|a| (&a.y - problem.sum_gradient(&a.x) / agents).norm())
            .fold(0.0, f64::max)
    }
}
