//! Per-phase assignment solvers.
//!
//! Each phase the learner maximizes `Σ(q̂ ⊙ a)` over the estimated feasible
//! set
//!
//! ```text
//! { a possible : Σ_i f̂_im a_im - l_bar * max_{i: a_im = 1} d_im <= L_m  for all m }
//! ```
//!
//! The per-agent slack is the largest per-pair slack among the agent's tasks,
//! so the set is not closed under inclusion: dropping the task that carries
//! the largest slack can break feasibility. Both solvers handle this
//! directly instead of relaxing it.

mod approx;
mod exact;
pub mod knapsack;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AssignmentMatrix, Matrix};
use crate::scalar::Scalar;

pub use approx::solve_approx;
pub use exact::{solve_exact, solve_fallback};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", try_from = "RawOracleMode")]
pub enum OracleMode {
    Exact,
    Approximate { alpha: f64 },
}

/// Wire form of [`OracleMode`], so that stray keys are rejected for every
/// mode.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracleMode {
    mode: String,
    alpha: Option<f64>,
}

impl TryFrom<RawOracleMode> for OracleMode {
    type Error = String;

    fn try_from(raw: RawOracleMode) -> std::result::Result<Self, String> {
        match (raw.mode.as_str(), raw.alpha) {
            ("exact", None) => Ok(OracleMode::Exact),
            ("exact", Some(_)) => Err("`alpha` only applies to mode = \"approximate\"".into()),
            ("approximate", Some(alpha)) => Ok(OracleMode::Approximate { alpha }),
            ("approximate", None) => Err("mode = \"approximate\" needs `alpha`".into()),
            (other, _) => Err(format!("unknown oracle mode `{other}`; use \"exact\" or \"approximate\"")),
        }
    }
}

impl OracleMode {
    /// `α` of the benchmark this mode is compared against.
    pub fn alpha(&self) -> f64 {
        match *self {
            OracleMode::Exact => 0.0,
            OracleMode::Approximate { alpha } => alpha,
        }
    }
}

/// Search limits and discretization for the solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    /// Largest `N * M` the exact solver accepts.
    pub max_cells: usize,
    /// Node cap for every depth-first search.
    pub max_nodes: u64,
    /// Weight granularity of the knapsack dynamic program.
    pub epsilon_w: f64,
    /// Per-agent knapsacks with at most this many candidate items are solved
    /// by exact enumeration instead of the discretized program.
    pub exact_knapsack_items: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            max_cells: 64,
            max_nodes: 20_000_000,
            epsilon_w: 1e-3,
            exact_knapsack_items: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleInput<S> {
    /// Objective weights (the UCB rates).
    pub weights: Matrix<S>,
    /// Estimated per-round resource draws.
    pub est_loads: Matrix<S>,
    /// Per-pair LCB slack `d_im`.
    pub slack_terms: Matrix<S>,
    pub capacities: Vec<S>,
    pub l_bar: u32,
    pub mode: OracleMode,
}

impl<S: Scalar> OracleInput<S> {
    pub fn tasks(&self) -> usize {
        self.weights.rows()
    }

    pub fn agents(&self) -> usize {
        self.weights.cols()
    }

    pub(crate) fn l_bar_scalar(&self) -> S {
        S::count(self.l_bar as u64)
    }

    /// LCB load of agent `m` running `tasks`; `None` when `tasks` is empty.
    pub fn agent_lcb(&self, m: usize, tasks: impl IntoIterator<Item = usize>) -> Option<S> {
        let mut load = S::zero();
        let mut max_slack: Option<S> = None;
        for i in tasks {
            load += self.est_loads[(i, m)];
            let d = self.slack_terms[(i, m)];
            max_slack = Some(max_slack.map_or(d, |s| s.max(d)));
        }
        max_slack.map(|d| load - self.l_bar_scalar() * d)
    }

    /// `Σ_m max{LCB_m - L_m, 0}` over agents with at least one task.
    pub fn lcb_violation(&self, a: &AssignmentMatrix) -> S {
        (0..self.agents()).fold(S::zero(), |acc, m| {
            let over = self
                .agent_lcb(m, a.tasks_of(m))
                .map_or(S::zero(), |lcb| (lcb - self.capacities[m]).max(S::zero()));
            acc + over
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleStatus {
    Optimal,
    Approximate,
    Fallback,
}

impl fmt::Display for OracleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleStatus::Optimal => "optimal",
            OracleStatus::Approximate => "approximate",
            OracleStatus::Fallback => "fallback",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutput<S> {
    pub assignment: AssignmentMatrix,
    pub objective: S,
    pub status: OracleStatus,
}

/// Membership in the estimated feasible set: possible, and for every agent
/// with tasks `Σ f̂ a - l_bar * max d <= L`.
pub fn lcb_constraint_satisfied<S: Scalar>(a: &AssignmentMatrix, input: &OracleInput<S>) -> bool {
    a.shape() == input.weights.shape()
        && a.rows_at_most_one()
        && (0..input.agents()).all(|m| {
            input
                .agent_lcb(m, a.tasks_of(m))
                .is_none_or(|lcb| lcb <= input.capacities[m] + S::tol())
        })
}

/// Runs the solver selected by `input.mode`.
pub fn solve<S: Scalar>(input: &OracleInput<S>, settings: &OracleSettings) -> Result<OracleOutput<S>> {
    match input.mode {
        OracleMode::Exact => solve_exact(input, settings),
        OracleMode::Approximate { alpha } => solve_approx(input, alpha, settings),
    }
}
