use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("α₀ must be positive and finite (got {0})")]
    Alpha0Positive(f64),
    #[error("α₀ must lie in (0, 1] (got {0})")]
    Alpha0Unit(f64),
    #[error("β must lie in (0.5, 1] (got {0})")]
    Beta(f64),
    #[error("μ must lie in (0, 1) (got {0})")]
    Mu(f64),
    #[error("the accuracy constant must be positive and finite (got {0})")]
    EpsConstant(f64),
    #[error("Σ α[n] ε[n] diverges for this step-size rule")]
    EpsNotSummable,
}

/// Step-size sequence `α[n]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSizeRule {
    /// `α[n] = α₀ / (n + 1)^β`.
    Polynomial { alpha0: f64, beta: f64 },
    /// `α[n] = α[n−1] (1 − μ α[n−1])`.
    Recursive { alpha0: f64, mu: f64 },
    /// Fixed step, for diagnostics only; not square-summable.
    Constant(f64),
}

impl StepSizeRule {
    pub fn validate(&self) -> Result<(), StepError> {
        match *self {
            StepSizeRule::Polynomial { alpha0, beta } => {
                if !(alpha0.is_finite() && alpha0 > 0.0) {
                    return Err(StepError::Alpha0Positive(alpha0));
                }
                if !(beta > 0.5 && beta <= 1.0) {
                    return Err(StepError::Beta(beta));
                }
            }
            StepSizeRule::Recursive { alpha0, mu } => {
                if !(alpha0 > 0.0 && alpha0 <= 1.0) {
                    return Err(StepError::Alpha0Unit(alpha0));
                }
                if !(mu > 0.0 && mu < 1.0) {
                    return Err(StepError::Mu(mu));
                }
            }
            StepSizeRule::Constant(a) => {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(StepError::Alpha0Positive(a));
                }
            }
        }
        Ok(())
    }

    /// `Σ α[n] = ∞`, decided from the closed form.
    ///
    /// The recursive rule behaves like `1/(μ n)` for large `n`: with
    /// `u[n] = 1/α[n]`, `u[n+1] − u[n] = μ/(1 − μα[n]) → μ`.
    pub fn diverges(&self) -> bool {
        match *self {
            StepSizeRule::Polynomial { beta, .. } => beta <= 1.0,
            StepSizeRule::Recursive { .. } => true,
            StepSizeRule::Constant(a) => a > 0.0,
        }
    }

    /// `Σ α[n]² < ∞`, decided from the closed form.
    pub fn square_summable(&self) -> bool {
        match *self {
            StepSizeRule::Polynomial { beta, .. } => beta > 0.5,
            StepSizeRule::Recursive { .. } => true,
            StepSizeRule::Constant(a) => a == 0.0,
        }
    }

    pub fn iter(&self) -> StepIter {
        StepIter {
            rule: *self,
            n: 0,
            current: match *self {
                StepSizeRule::Polynomial { alpha0, .. } | StepSizeRule::Recursive { alpha0, .. } => alpha0,
                StepSizeRule::Constant(a) => a,
            },
        }
    }

    /// `α[n]`; the recursive rule is evaluated by running the recursion.
    pub fn alpha(&self, n: usize) -> f64 {
        match *self {
            StepSizeRule::Polynomial { alpha0, beta } => alpha0 / ((n + 1) as f64).powf(beta),
            _ => self.iter().nth(n).expect("infinite sequence"),
        }
    }
}

/// Iterator over `α[0], α[1], …`.
#[derive(Clone, Debug)]
pub struct StepIter {
    rule: StepSizeRule,
    n: usize,
    current: f64,
}

impl Iterator for StepIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let out = match self.rule {
            StepSizeRule::Polynomial { alpha0, beta } => alpha0 / ((self.n + 1) as f64).powf(beta),
            StepSizeRule::Recursive { mu, .. } => {
                let a = self.current;
                self.current = a * (1.0 - mu * a);
                a
            }
            StepSizeRule::Constant(a) => a,
        };
        self.n += 1;
        Some(out)
    }
}

/// Subproblem accuracies `ε_i[n] = c_i α[n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InexactSchedule {
    constants: Vec<f64>,
}

impl InexactSchedule {
    pub fn uniform(agents: usize, c: f64) -> Self {
        Self {
            constants: vec![c; agents],
        }
    }

    pub fn per_agent(constants: Vec<f64>) -> Self {
        Self { constants }
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn eps(&self, agent: usize, alpha: f64) -> f64 {
        self.constants[agent] * alpha
    }

    /// Checks the constants and that `Σ α[n] ε_i[n] = c_i Σ α[n]² < ∞`.
    pub fn validate(&self, rule: &StepSizeRule) -> Result<(), StepError> {
        if let Some(&c) = self.constants.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(StepError::EpsConstant(c));
        }
        if !rule.square_summable() {
            return Err(StepError::EpsNotSummable);
        }
        Ok(())
    }
}
