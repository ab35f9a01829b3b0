//! The distributed driver, the gradient-consensus baseline, and step sizes.

mod run;
mod state;
mod step;

pub use run::{
    dgradient_step, next_l_equivalence_check, next_step, run, Algorithm, RunConfig, RunTrace,
    Runner, SolverError,
};
pub use state::{AgentState, NetworkState};
pub use step::{InexactSchedule, StepError, StepIter, StepSizeRule};

#[cfg(test)]
mod tests;
