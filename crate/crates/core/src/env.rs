//! Discrete-time blocking environment.
//!
//! Each round the planner hands over the tasks it wants to start. Every new
//! start samples a completion time and a reward; every task in progress draws
//! a resource amount. Rewards of a round's starts are credited at the start
//! round when the combined running assignment is feasible in expectation, and
//! the expected overload of every round is accumulated as the violation.
//!
//! A task started at round `s` with duration `c` occupies rounds
//! `s..s + c` and completes at round `s + c`. Its observation is delivered in
//! the report of round `s + c - 1`, i.e. before the planner acts at the
//! completion round.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AssignmentMatrix, ProblemInstance};
use crate::scalar::Scalar;

/// A task in progress.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningTask<S> {
    pub task: usize,
    pub agent: usize,
    pub start_round: u64,
    pub duration: u32,
    pub reward: S,
    /// Whether the start round's combined assignment was feasible.
    pub counted: bool,
}

impl<S> RunningTask<S> {
    pub fn completion_round(&self) -> u64 {
        self.start_round + u64::from(self.duration)
    }
}

/// One task execution, with the resource draws of every round it ran.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRecord<S> {
    pub task: RunningTask<S>,
    pub resource_draws: Vec<S>,
    /// False while the task is still running.
    pub finished: bool,
}

/// Resource draw of a running pair in the reported round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResourceDraw<S> {
    pub task: usize,
    pub agent: usize,
    pub value: S,
}

/// Reward and duration of a task that completes at the next round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Completion<S> {
    pub task: usize,
    pub agent: usize,
    pub reward: S,
    pub duration: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<S> {
    pub round: u64,
    pub started: AssignmentMatrix,
    pub counted: bool,
    pub reward_increment: S,
    pub violation_increment: S,
    pub resource_draws: Vec<ResourceDraw<S>>,
    pub completions: Vec<Completion<S>>,
}

/// Row of the completion-log CSV. Indices are 0-based.
#[derive(Clone, Debug, Serialize)]
pub struct CompletionRow {
    pub trial: u64,
    pub task: usize,
    pub agent: usize,
    pub start_round: u64,
    pub duration: u32,
    pub reward: f64,
    pub counted: bool,
}

/// Mutable per-trial environment state.
pub struct EnvState<'a, S: Scalar> {
    instance: &'a ProblemInstance<S>,
    round: u64,
    running: Vec<Option<RunningTask<S>>>,
    open_draws: Vec<Vec<S>>,
    cumulative_reward: S,
    cumulative_violation: S,
    /// Cumulative `(reward, violation)` after each round, index `t - 1`.
    history: Vec<(S, S)>,
    rng: ChaCha8Rng,
    keep_log: bool,
    log: Vec<CompletionRecord<S>>,
    deceivers: BTreeMap<AssignmentMatrix, u64>,
}

impl<'a, S: Scalar> EnvState<'a, S> {
    /// Fresh environment at round 1 driven by `rng`.
    pub fn new(instance: &'a ProblemInstance<S>, rng: ChaCha8Rng, keep_log: bool) -> Self {
        let n = instance.num_tasks();
        Self {
            instance,
            round: 1,
            running: vec![None; n],
            open_draws: vec![Vec::new(); n],
            cumulative_reward: S::zero(),
            cumulative_violation: S::zero(),
            history: Vec::new(),
            rng,
            keep_log,
            log: Vec::new(),
            deceivers: BTreeMap::new(),
        }
    }

    /// Environment seeded from a plain integer seed.
    pub fn seeded(instance: &'a ProblemInstance<S>, seed: u64, keep_log: bool) -> Self {
        Self::new(instance, ChaCha8Rng::seed_from_u64(seed), keep_log)
    }

    pub fn instance(&self) -> &'a ProblemInstance<S> {
        self.instance
    }

    /// The round the next `step` will play (1-based).
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn cumulative_reward(&self) -> S {
        self.cumulative_reward
    }

    pub fn cumulative_violation(&self) -> S {
        self.cumulative_violation
    }

    pub fn running(&self) -> impl Iterator<Item = &RunningTask<S>> {
        self.running.iter().flatten()
    }

    /// Rounds spent executing each infeasible combined assignment.
    pub fn deceiver_rounds(&self) -> &BTreeMap<AssignmentMatrix, u64> {
        &self.deceivers
    }

    /// Tasks in progress at the current round (started earlier, not yet
    /// completed).
    pub fn current_b(&self) -> AssignmentMatrix {
        let mut b = AssignmentMatrix::zeros(self.instance.num_tasks(), self.instance.num_agents());
        for task in self.running() {
            b.set(task.task, task.agent, true);
        }
        b
    }

    /// `b(t) = Σ_{s < t} a(s) 1[s + c(s) > t]` recomputed from the log.
    pub fn b_from_log(&self, t: u64) -> Result<AssignmentMatrix> {
        if !self.keep_log {
            return Err(Error::State("completion log is disabled".into()));
        }
        let mut b = AssignmentMatrix::zeros(self.instance.num_tasks(), self.instance.num_agents());
        let finished = self.log.iter().map(|r| &r.task);
        for task in finished.chain(self.running()) {
            if task.start_round < t && task.completion_round() > t {
                b.set(task.task, task.agent, true);
            }
        }
        Ok(b)
    }

    /// Plays one round with the new starts `a`.
    pub fn step(&mut self, a: &AssignmentMatrix) -> Result<StepReport<S>> {
        let (n, m) = (self.instance.num_tasks(), self.instance.num_agents());
        a.ensure_shape(n, m)?;
        if !a.rows_at_most_one() {
            return Err(Error::Contract(format!(
                "round {}: a task is assigned to more than one agent",
                self.round
            )));
        }
        let b = self.current_b();
        if let Some(i) = (0..n).find(|&i| a.row_sum(i) > 0 && b.row_sum(i) > 0) {
            return Err(Error::Contract(format!(
                "round {}: task {i} is started while still running",
                self.round
            )));
        }
        let combined = a.checked_add(&b)?;
        let counted = self.instance.is_feasible(&combined)?;
        let violation = self.instance.overload(&combined)?;
        if !counted {
            *self.deceivers.entry(combined.clone()).or_insert(0) += 1;
        }

        let mut reward_increment = S::zero();
        for (i, k) in a.pairs() {
            let duration = self.instance.time_dists()[(i, k)].sample_integer(&mut self.rng);
            let reward = self.instance.reward_dists()[(i, k)].sample(&mut self.rng);
            if counted {
                reward_increment += reward;
            }
            self.running[i] = Some(RunningTask {
                task: i,
                agent: k,
                start_round: self.round,
                duration,
                reward,
                counted,
            });
        }

        let mut resource_draws = Vec::with_capacity(combined.count());
        for i in 0..n {
            let Some(task) = &self.running[i] else { continue };
            let value = self.instance.resource_dists()[(i, task.agent)].sample(&mut self.rng);
            resource_draws.push(ResourceDraw {
                task: i,
                agent: task.agent,
                value,
            });
            if self.keep_log {
                self.open_draws[i].push(value);
            }
        }

        let mut completions = Vec::new();
        for i in 0..n {
            let done = self.running[i]
                .as_ref()
                .is_some_and(|task| task.completion_round() == self.round + 1);
            if !done {
                continue;
            }
            let task = self.running[i].take().expect("checked above");
            completions.push(Completion {
                task: i,
                agent: task.agent,
                reward: task.reward,
                duration: task.duration,
            });
            if self.keep_log {
                self.log.push(CompletionRecord {
                    task,
                    resource_draws: std::mem::take(&mut self.open_draws[i]),
                    finished: true,
                });
            }
        }

        self.cumulative_reward += reward_increment;
        self.cumulative_violation += violation;
        self.history.push((self.cumulative_reward, self.cumulative_violation));
        let report = StepReport {
            round: self.round,
            started: a.clone(),
            counted,
            reward_increment,
            violation_increment: violation,
            resource_draws,
            completions,
        };
        self.round += 1;
        Ok(report)
    }

    /// Cumulative `(reward, violation)` after round `t`; `(0, 0)` at `t = 0`.
    pub fn cumulative_at(&self, t: u64) -> Result<(S, S)> {
        if t == 0 {
            return Ok((S::zero(), S::zero()));
        }
        self.history
            .get((t - 1) as usize)
            .copied()
            .ok_or_else(|| Error::State(format!("round {t} has not been played yet")))
    }

    /// Realized `(E_T, V_T)`: rewards of counted starts at rounds `<= T` and
    /// overload accumulated over rounds `<= T`.
    pub fn final_metrics(&self, horizon: u64) -> Result<(S, S)> {
        if self.round <= horizon {
            return Err(Error::State(format!(
                "final metrics for T = {horizon} requested at round {}",
                self.round
            )));
        }
        self.cumulative_at(horizon)
    }

    /// Every execution so far: finished ones in completion order, then those
    /// still running in task order. Empty when the log is disabled.
    pub fn records(&self) -> Vec<CompletionRecord<S>> {
        if !self.keep_log {
            return Vec::new();
        }
        let open = self.running().map(|task| CompletionRecord {
            task: task.clone(),
            resource_draws: self.open_draws[task.task].clone(),
            finished: false,
        });
        self.log.iter().cloned().chain(open).collect()
    }

    /// Completion-log rows for export.
    pub fn completion_rows(&self, trial: u64) -> Vec<CompletionRow> {
        self.records()
            .into_iter()
            .map(|r| CompletionRow {
                trial,
                task: r.task.task,
                agent: r.task.agent,
                start_round: r.task.start_round,
                duration: r.task.duration,
                reward: r.task.reward.as_f64(),
                counted: r.task.counted,
            })
            .collect()
    }
}
