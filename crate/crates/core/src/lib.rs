//! Phased UCB/LCB learning for heterogeneous multi-agent task assignment.
//!
//! Tasks are assigned to agents that take a random number of rounds to
//! finish them, draw a random amount of resource every round while working,
//! and pay a random reward. The planner learns all three laws online while
//! keeping each agent's expected resource load within capacity.

pub mod bandit;
pub mod env;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod scalar;

pub use error::{Error, Result};
pub use model::{AssignmentMatrix, DistributionSpec, Matrix};
pub use scalar::Scalar;

pub type ProblemInstance64 = model::ProblemInstance<f64>;
pub type ProblemInstance32 = model::ProblemInstance<f32>;
pub type EnvState64<'a> = env::EnvState<'a, f64>;
pub type EnvState32<'a> = env::EnvState<'a, f32>;
pub type LearnerState64 = bandit::LearnerState<f64>;
pub type LearnerState32 = bandit::LearnerState<f32>;
pub type TrialOutcome64 = bandit::TrialOutcome<f64>;
pub type TrialOutcome32 = bandit::TrialOutcome<f32>;
