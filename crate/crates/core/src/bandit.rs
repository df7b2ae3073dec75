//! Phased UCB/LCB learner.
//!
//! After an initialization phase in which every agent completes every task
//! `B` times, time is split into phases. At the start of a phase the learner
//! builds optimistic reward rates and pessimistic resource estimates, asks the
//! oracle for an assignment over the estimated feasible set and holds it for
//! the phase, restarting each of its tasks as soon as it completes. No task
//! starts while a task outside the held assignment is still running.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{CompletionRecord, CompletionRow, EnvState, StepReport};
use crate::error::{Error, Result};
use crate::model::{AssignmentMatrix, Matrix, ProblemInstance};
use crate::oracle::{self, OracleInput, OracleMode, OracleSettings, OracleStatus};
use crate::scalar::Scalar;

/// Salt separating the audit stream from the environment stream.
const AUDIT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Initialization budget `B = ⌈β (C_u / C_l) ln T⌉`, at least 1.
pub fn init_budget(beta: f64, c_lower: u32, c_upper: u32, horizon: u64) -> u64 {
    let raw = beta * (f64::from(c_upper) / f64::from(c_lower)) * (horizon as f64).ln();
    (raw.ceil().max(1.0)) as u64
}

/// Rejects horizons that cannot host initialization: needs `T > M N B C_u`.
pub fn check_horizon(tasks: usize, agents: usize, budget: u64, c_upper: u32, horizon: u64) -> Result<()> {
    let required = (tasks as u64)
        .saturating_mul(agents as u64)
        .saturating_mul(budget)
        .saturating_mul(u64::from(c_upper));
    if horizon > required {
        Ok(())
    } else {
        Err(Error::Horizon {
            horizon,
            required,
            agents,
            tasks,
            budget,
            c_upper,
        })
    }
}

/// Phase-count cap `N M (2 (C_u / C_l) ln T + 2) + 1`.
pub fn phase_cap(tasks: usize, agents: usize, c_lower: u32, c_upper: u32, horizon: u64) -> f64 {
    let ratio = f64::from(c_upper) / f64::from(c_lower);
    (tasks * agents) as f64 * (2.0 * ratio * (horizon as f64).ln() + 2.0) + 1.0
}

/// Settings of one learner run.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub horizon: u64,
    pub beta: f64,
    /// Replaces the computed `B` (testing aid); must be at least 1.
    pub init_budget: Option<u64>,
    pub oracle: OracleMode,
    pub settings: OracleSettings,
    pub trace_stride: u64,
    pub keep_log: bool,
    /// Number of rounds at which the running set is audited.
    pub audit_rounds: usize,
}

impl LearnerConfig {
    pub fn new(horizon: u64, beta: f64, oracle: OracleMode) -> Self {
        Self {
            horizon,
            beta,
            init_budget: None,
            oracle,
            settings: OracleSettings::default(),
            trace_stride: 100,
            keep_log: true,
            audit_rounds: 100,
        }
    }

    pub fn resolved_budget(&self, c_lower: u32, c_upper: u32) -> Result<u64> {
        match self.init_budget {
            Some(0) => Err(Error::Contract("initialization budget B must be at least 1".into())),
            Some(b) => Ok(b),
            None => Ok(init_budget(self.beta, c_lower, c_upper, self.horizon)),
        }
    }
}

/// Running statistics of the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState<S> {
    c_lower: u32,
    c_upper: u32,
    l_bar: u32,
    budget: u64,
    horizon: u64,
    /// Round of the next report to be observed.
    round: u64,
    completions: Matrix<u64>,
    exec_rounds: Matrix<u64>,
    mean_reward: Matrix<S>,
    mean_time: Matrix<S>,
    /// Sum of squared deviations of completion times (Welford).
    m2_time: Matrix<S>,
    mean_resource: Matrix<S>,
}

impl<S: Scalar> LearnerState<S> {
    pub fn new(instance: &ProblemInstance<S>, l_bar: u32, budget: u64, horizon: u64) -> Self {
        let (n, m) = (instance.num_tasks(), instance.num_agents());
        Self {
            c_lower: instance.c_lower(),
            c_upper: instance.c_upper(),
            l_bar,
            budget,
            horizon,
            round: 1,
            completions: Matrix::filled(n, m, 0),
            exec_rounds: Matrix::filled(n, m, 0),
            mean_reward: Matrix::zeros(n, m),
            mean_time: Matrix::zeros(n, m),
            m2_time: Matrix::zeros(n, m),
            mean_resource: Matrix::zeros(n, m),
        }
    }

    pub fn tasks(&self) -> usize {
        self.completions.rows()
    }

    pub fn agents(&self) -> usize {
        self.completions.cols()
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn l_bar(&self) -> u32 {
        self.l_bar
    }

    pub fn completions(&self) -> &Matrix<u64> {
        &self.completions
    }

    pub fn exec_rounds(&self) -> &Matrix<u64> {
        &self.exec_rounds
    }

    pub fn mean_reward(&self) -> &Matrix<S> {
        &self.mean_reward
    }

    pub fn mean_time(&self) -> &Matrix<S> {
        &self.mean_time
    }

    pub fn mean_resource(&self) -> &Matrix<S> {
        &self.mean_resource
    }

    /// Population variance of the observed completion times.
    pub fn var_time(&self) -> Matrix<S> {
        Matrix::from_fn(self.tasks(), self.agents(), |i, m| {
            let k = self.completions[(i, m)];
            if k == 0 {
                S::zero()
            } else {
                self.m2_time[(i, m)] / S::count(k)
            }
        })
    }

    /// Smallest completion count over all pairs.
    pub fn min_completions(&self) -> u64 {
        self.completions.iter().copied().min().unwrap_or(0)
    }

    /// Folds one round's report into the statistics.
    pub fn observe(&mut self, report: &StepReport<S>) -> Result<()> {
        if report.round != self.round {
            return Err(Error::Sequencing {
                expected: self.round,
                got: report.round,
            });
        }
        for draw in &report.resource_draws {
            let idx = (draw.task, draw.agent);
            self.exec_rounds[idx] += 1;
            let k = S::count(self.exec_rounds[idx]);
            let step = (draw.value - self.mean_resource[idx]) / k;
            self.mean_resource[idx] += step;
        }
        for done in &report.completions {
            let idx = (done.task, done.agent);
            self.completions[idx] += 1;
            let k = S::count(self.completions[idx]);
            let step = (done.reward - self.mean_reward[idx]) / k;
            self.mean_reward[idx] += step;
            let d = S::count(u64::from(done.duration));
            let delta = d - self.mean_time[idx];
            self.mean_time[idx] += delta / k;
            let spread = delta * (d - self.mean_time[idx]);
            self.m2_time[idx] += spread;
        }
        self.round += 1;
        Ok(())
    }

    fn ln_round(t: u64) -> Result<S> {
        if t < 2 {
            return Err(Error::State(format!("confidence radii need t >= 2, got t = {t}")));
        }
        Ok(S::lit((t as f64).ln()))
    }

    /// Optimistic reward rates
    /// `min{1, r̂ + d^r} / max{C_l, ĉ - d^c}` with
    /// `d^r = √(1.5 ln t / T)` and
    /// `d^c = √(3 V ln t / T) + 9 (C_u - C_l) ln t / T`.
    pub fn ucb_q(&self, t: u64) -> Result<Matrix<S>> {
        if let Some(((i, m), _)) = self.completions.indexed().find(|(_, &k)| k == 0) {
            return Err(Error::State(format!("pair ({i},{m}) has no completed task")));
        }
        let ln_t = Self::ln_round(t)?;
        let var = self.var_time();
        let spread = S::count(u64::from(self.c_upper - self.c_lower));
        let c_lower = S::count(u64::from(self.c_lower));
        Ok(Matrix::from_fn(self.tasks(), self.agents(), |i, m| {
            let k = S::count(self.completions[(i, m)]);
            let d_r = (S::lit(1.5) * ln_t / k).sqrt();
            let d_c = (S::lit(3.0) * var[(i, m)] * ln_t / k).sqrt() + S::lit(9.0) * spread * ln_t / k;
            let num = (self.mean_reward[(i, m)] + d_r).min(S::one());
            let den = (self.mean_time[(i, m)] - d_c).max(c_lower);
            num / den
        }))
    }

    /// Per-pair resource slack `√(1.5 ln t / T^f)`.
    pub fn lcb_slack_f(&self, t: u64) -> Result<Matrix<S>> {
        if let Some(((i, m), _)) = self.exec_rounds.indexed().find(|(_, &k)| k == 0) {
            return Err(Error::State(format!("pair ({i},{m}) was never executed")));
        }
        let ln_t = Self::ln_round(t)?;
        Ok(self
            .exec_rounds
            .map(|&k| (S::lit(1.5) * ln_t / S::count(k)).sqrt()))
    }

    /// Phase length `C_l · min T_im + 2 C_u`, the minimum over all pairs.
    pub fn phase_length(&self) -> u64 {
        u64::from(self.c_lower) * self.min_completions() + 2 * u64::from(self.c_upper)
    }

    /// Chooses the assignment held during the phase starting at `t_s`.
    pub fn plan_phase(
        &self,
        index: u64,
        t_s: u64,
        capacities: &[S],
        mode: OracleMode,
        settings: &OracleSettings,
    ) -> Result<PhasePlan<S>> {
        let ucb = self.ucb_q(t_s)?;
        let slack = self.lcb_slack_f(t_s)?;
        let input = OracleInput {
            weights: ucb.clone(),
            est_loads: self.mean_resource.clone(),
            slack_terms: slack.clone(),
            capacities: capacities.to_vec(),
            l_bar: self.l_bar,
            mode,
        };
        let out = oracle::solve(&input, settings)?;
        // the zero matrix always satisfies the constraint, so the estimated
        // feasible set is never empty in practice
        let zero = AssignmentMatrix::zeros(self.tasks(), self.agents());
        let non_empty = oracle::lcb_constraint_satisfied(&out.assignment, &input)
            || oracle::lcb_constraint_satisfied(&zero, &input);
        let out = if non_empty {
            out
        } else {
            oracle::solve_fallback(&input, settings)?
        };
        let length = self.phase_length();
        Ok(PhasePlan {
            index,
            start: t_s,
            length,
            status: PhaseStatus::from(out.status),
            objective: out.objective.as_f64(),
            assignment: out.assignment,
            completions: self.completions.clone(),
            ucb,
            slack,
        })
    }
}

/// New starts for a round: the held assignment minus what is running, or
/// nothing when a task outside the held assignment is still running.
pub fn round_action(held: &AssignmentMatrix, b: &AssignmentMatrix) -> Result<AssignmentMatrix> {
    if b.is_subset_of(held) {
        held.checked_sub(b)
    } else {
        Ok(AssignmentMatrix::zeros(held.tasks(), held.agents()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseStatus {
    Init,
    Optimal,
    Approximate,
    Fallback,
}

impl From<OracleStatus> for PhaseStatus {
    fn from(s: OracleStatus) -> Self {
        match s {
            OracleStatus::Optimal => PhaseStatus::Optimal,
            OracleStatus::Approximate => PhaseStatus::Approximate,
            OracleStatus::Fallback => PhaseStatus::Fallback,
        }
    }
}

impl std::fmt::Display for PhaseStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhaseStatus::Init => "init",
            PhaseStatus::Optimal => "optimal",
            PhaseStatus::Approximate => "approximate",
            PhaseStatus::Fallback => "fallback",
        })
    }
}

/// A phase as planned, with the statistics it was planned from.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlan<S> {
    /// 0 for initialization, then 1, 2, ...
    pub index: u64,
    pub start: u64,
    pub length: u64,
    pub status: PhaseStatus,
    pub objective: f64,
    pub assignment: AssignmentMatrix,
    /// Completion counts at the phase start.
    pub completions: Matrix<u64>,
    pub ucb: Matrix<S>,
    pub slack: Matrix<S>,
}

/// Cumulative counted reward and violation after round `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: u64,
    pub reward: f64,
    pub violation: f64,
}

/// Running set at an audited round, compared with the log afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct BAudit {
    pub round: u64,
    pub incremental: AssignmentMatrix,
    pub direct: AssignmentMatrix,
}

impl BAudit {
    pub fn agrees(&self) -> bool {
        self.incremental == self.direct
    }
}

/// Everything one learner run produces.
#[derive(Clone, Debug)]
pub struct TrialOutcome<S> {
    pub trial: u64,
    pub horizon: u64,
    pub budget: u64,
    pub l_bar: u32,
    /// First round after initialization.
    pub t_1: u64,
    pub trace: Vec<TracePoint>,
    pub phases: Vec<PhasePlan<S>>,
    pub final_reward: f64,
    pub final_violation: f64,
    pub audits: Vec<BAudit>,
    pub records: Vec<CompletionRecord<S>>,
    pub completion_rows: Vec<CompletionRow>,
    /// Rounds spent on each infeasible combined assignment, by bitstring.
    pub deceiver_rounds: Vec<(AssignmentMatrix, u64)>,
    pub learner: LearnerState<S>,
}

/// Independent random streams of a trial: environment and audit sampling.
pub fn trial_streams(master_seed: u64, trial: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(master_seed);
    env.set_stream(trial);
    let mut audit = ChaCha8Rng::seed_from_u64(master_seed ^ AUDIT_SEED_SALT);
    audit.set_stream(trial);
    (env, audit)
}

struct Recorder {
    stride: u64,
    horizon: u64,
    trace: Vec<TracePoint>,
    audit_at: Vec<u64>,
    next_audit: usize,
    audits: Vec<(u64, AssignmentMatrix)>,
}

impl Recorder {
    fn before_step<S: Scalar>(&mut self, env: &EnvState<'_, S>) {
        if self.audit_at.get(self.next_audit) == Some(&env.round()) {
            self.audits.push((env.round(), env.current_b()));
            self.next_audit += 1;
        }
    }

    fn after_step<S: Scalar>(&mut self, env: &EnvState<'_, S>) {
        let t = env.round() - 1;
        if t % self.stride == 0 || t == self.horizon {
            self.trace.push(TracePoint {
                t,
                reward: env.cumulative_reward().as_f64(),
                violation: env.cumulative_violation().as_f64(),
            });
        }
    }
}

/// Initialization: every agent completes every task `B` times.
///
/// Agents work in parallel, each cycling through its tasks; a task is never
/// run by two agents at once, and the agent served first rotates each round.
/// Returns the first round after the last completion, or `T + 1` when the
/// horizon ends first.
fn init_phase<S: Scalar>(
    env: &mut EnvState<'_, S>,
    learner: &mut LearnerState<S>,
    rec: &mut Recorder,
) -> Result<u64> {
    let (n, m) = (learner.tasks(), learner.agents());
    let budget = learner.budget();
    let mut started = Matrix::filled(n, m, 0u64);
    let mut pointer = vec![0usize; m];
    while learner.min_completions() < budget && env.round() <= learner.horizon() {
        let b = env.current_b();
        let mut a = AssignmentMatrix::zeros(n, m);
        let first = (env.round() as usize) % m;
        for k in (0..m).map(|j| (first + j) % m) {
            if b.tasks_of(k).next().is_some() {
                continue;
            }
            let pick = (0..n).map(|j| (pointer[k] + j) % n).find(|&i| {
                started[(i, k)] < budget && b.row_sum(i) == 0 && a.row_sum(i) == 0
            });
            if let Some(i) = pick {
                a.set(i, k, true);
                started[(i, k)] += 1;
                pointer[k] = (i + 1) % n;
            }
        }
        rec.before_step(env);
        let report = env.step(&a)?;
        learner.observe(&report)?;
        rec.after_step(env);
    }
    Ok(env.round())
}

/// Runs initialization and then phases until round `T` inclusive.
pub fn run<S: Scalar>(
    instance: &ProblemInstance<S>,
    l_bar: u32,
    config: &LearnerConfig,
    master_seed: u64,
    trial: u64,
) -> Result<TrialOutcome<S>> {
    let (n, m) = (instance.num_tasks(), instance.num_agents());
    let budget = config.resolved_budget(instance.c_lower(), instance.c_upper())?;
    check_horizon(n, m, budget, instance.c_upper(), config.horizon)?;
    if config.trace_stride == 0 {
        return Err(Error::Contract("trace stride must be at least 1".into()));
    }
    let horizon = config.horizon;
    let (env_rng, mut audit_rng) = trial_streams(master_seed, trial);
    let mut audit_at: Vec<u64> = if config.keep_log {
        let amount = config.audit_rounds.min(horizon as usize);
        index::sample(&mut audit_rng, horizon as usize, amount)
            .into_iter()
            .map(|r| r as u64 + 1)
            .collect()
    } else {
        Vec::new()
    };
    audit_at.sort_unstable();

    let mut env = EnvState::new(instance, env_rng, config.keep_log);
    let mut learner = LearnerState::new(instance, l_bar, budget, horizon);
    let mut rec = Recorder {
        stride: config.trace_stride,
        horizon,
        trace: Vec::new(),
        audit_at,
        next_audit: 0,
        audits: Vec::new(),
    };

    let t_1 = init_phase(&mut env, &mut learner, &mut rec)?;
    let mut phases = vec![PhasePlan {
        index: 0,
        start: 1,
        length: t_1 - 1,
        status: PhaseStatus::Init,
        objective: 0.0,
        assignment: AssignmentMatrix::zeros(n, m),
        completions: Matrix::filled(n, m, 0),
        ucb: Matrix::zeros(n, m),
        slack: Matrix::zeros(n, m),
    }];

    let mut held = AssignmentMatrix::zeros(n, m);
    let mut next_phase = t_1;
    while env.round() <= horizon {
        let t = env.round();
        if t == next_phase {
            let plan = learner.plan_phase(
                phases.len() as u64,
                t,
                instance.capacities(),
                config.oracle,
                &config.settings,
            )?;
            held = plan.assignment.clone();
            next_phase = t + plan.length;
            phases.push(plan);
        }
        let a = round_action(&held, &env.current_b())?;
        rec.before_step(&env);
        let report = env.step(&a)?;
        learner.observe(&report)?;
        rec.after_step(&env);
    }

    let audits = rec
        .audits
        .into_iter()
        .map(|(round, incremental)| {
            Ok(BAudit {
                round,
                incremental,
                direct: env.b_from_log(round)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (final_reward, final_violation) = env.final_metrics(horizon)?;
    Ok(TrialOutcome {
        trial,
        horizon,
        budget,
        l_bar,
        t_1,
        trace: rec.trace,
        phases,
        final_reward: final_reward.as_f64(),
        final_violation: final_violation.as_f64(),
        audits,
        records: env.records(),
        completion_rows: env.completion_rows(trial),
        deceiver_rounds: env
            .deceiver_rounds()
            .iter()
            .map(|(a, &k)| (a.clone(), k))
            .collect(),
        learner,
    })
}

/// Outcome of the structural checks on one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StructuralReport {
    pub phase_lengths: bool,
    pub phase_cap: bool,
    pub growth: bool,
    pub one_copy: bool,
    pub b_equivalence: bool,
    pub failures: Vec<String>,
}

impl StructuralReport {
    pub fn all_hold(&self) -> bool {
        self.phase_lengths && self.phase_cap && self.growth && self.one_copy && self.b_equivalence
    }
}

/// Checks the structural laws every run must obey: phase lengths recomputed
/// from their snapshots, the phase-count cap, at most fourfold growth of
/// completion counts of held pairs across a phase, no task running twice at
/// once, and agreement of the audited running sets with the log.
pub fn check_structure<S: Scalar>(instance: &ProblemInstance<S>, out: &TrialOutcome<S>) -> StructuralReport {
    let (n, m) = (instance.num_tasks(), instance.num_agents());
    let (cl, cu) = (instance.c_lower(), instance.c_upper());
    let mut failures = Vec::new();

    let mut phase_lengths = true;
    for p in out.phases.iter().skip(1) {
        let min = p.completions.iter().copied().min().unwrap_or(0);
        let expected = u64::from(cl) * min + 2 * u64::from(cu);
        if p.length != expected {
            phase_lengths = false;
            failures.push(format!("phase {}: length {} != {expected}", p.index, p.length));
        }
    }

    let phases = (out.phases.len() - 1) as f64;
    let cap = phase_cap(n, m, cl, cu, out.horizon);
    let phase_cap_ok = phases <= cap;
    if !phase_cap_ok {
        failures.push(format!("{phases} phases exceed the cap {cap:.1}"));
    }

    let mut growth = true;
    for w in out.phases.windows(2).skip(1) {
        let (cur, next) = (&w[0], &w[1]);
        for idx in cur.assignment.pairs() {
            if next.completions[idx] > 4 * cur.completions[idx] {
                growth = false;
                failures.push(format!(
                    "phase {}: pair {idx:?} grew from {} to {}",
                    cur.index, cur.completions[idx], next.completions[idx]
                ));
            }
        }
    }

    let mut one_copy = true;
    let mut by_task: Vec<Vec<(u64, u64)>> = vec![Vec::new(); n];
    for r in &out.records {
        by_task[r.task.task].push((r.task.start_round, r.task.completion_round()));
    }
    for (i, spans) in by_task.iter_mut().enumerate() {
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            one_copy = false;
            failures.push(format!("task {i} ran twice at once"));
        }
    }

    let b_equivalence = out.audits.iter().all(BAudit::agrees);
    if !b_equivalence {
        failures.push("incremental running set disagrees with the log".into());
    }

    StructuralReport {
        phase_lengths,
        phase_cap: phase_cap_ok,
        growth,
        one_copy,
        b_equivalence,
        failures,
    }
}
