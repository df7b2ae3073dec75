//! Configuration-driven multi-trial experiments and their output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{self, LearnerConfig, StructuralReport, TrialOutcome};
use crate::error::{Error, Result};
use crate::metrics::{self, BenchmarkBundle, LogFitReport, SummaryRow};
use crate::model::{presets, AssignmentMatrix, DistributionSpec, Matrix, ProblemInstance};
use crate::oracle::{OracleMode, OracleSettings};
use crate::scalar::Scalar;

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "TASKBANDIT_OUTPUT_DIR";

pub const TRACES_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PHASES_FILE: &str = "phases.csv";
pub const COMPLETIONS_FILE: &str = "completions.csv";
pub const META_FILE: &str = "run_meta.toml";
pub const LOGFIT_FILE: &str = "logfit.toml";

pub const TRACE_COLUMNS: [&str; 4] = ["trial", "t", "reward", "violation"];
pub const PHASE_COLUMNS: [&str; 7] = ["trial", "s", "t_s", "l_s", "oracle_status", "objective", "assignment"];
pub const COMPLETION_COLUMNS: [&str; 7] = ["trial", "task", "agent", "start_round", "duration", "reward", "counted"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Where the problem instance comes from: a named preset, another TOML file
/// holding an inline instance, or inline matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_lower: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_upper: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_means: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_means: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resource_means: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_dists: Option<Vec<Vec<DistributionSpec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_dists: Option<Vec<Vec<DistributionSpec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resource_dists: Option<Vec<Vec<DistributionSpec<f64>>>>,
}

/// Names of the built-in instances.
pub const INSTANCE_PRESETS: [&str; 1] = ["small-team"];

fn default_trials() -> u64 {
    10
}

fn default_beta() -> f64 {
    2.0
}

fn default_stride() -> u64 {
    100
}

fn default_true() -> bool {
    true
}

fn default_gap_cap() -> u64 {
    1 << 20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("taskbandit-output")
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads for trials; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_true")]
    pub keep_completion_log: bool,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_bar_override: Option<u32>,
    /// Optimal assignment as `[task, agent]` pairs, for instances the exact
    /// search cannot handle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_pairs: Option<Vec<[usize; 2]>>,
    /// Largest number of possible assignments enumerated for gap diagnostics.
    #[serde(default = "default_gap_cap")]
    pub gap_enumeration_cap: u64,
    pub instance: InstanceConfig,
    pub oracle: OracleMode,
    #[serde(default)]
    pub oracle_settings: OracleSettings,
}

/// Built-in experiment presets: name, description, config.
pub fn presets() -> Vec<(&'static str, &'static str, RunConfig)> {
    let base = |horizon, trials, beta, oracle, dir: &str, keep_log| RunConfig {
        horizon,
        trials,
        master_seed: 2024,
        beta,
        trace_stride: 100,
        output_dir: PathBuf::from(dir),
        workers: 0,
        keep_completion_log: keep_log,
        precision: Precision::F64,
        l_bar_override: None,
        benchmark_pairs: None,
        gap_enumeration_cap: default_gap_cap(),
        instance: InstanceConfig {
            preset: Some("small-team".into()),
            ..InstanceConfig::default()
        },
        oracle,
        oracle_settings: OracleSettings::default(),
    };
    vec![
        (
            "small-team-exact",
            "4 tasks, 2 agents, exact oracle, T = 1e5, 10 trials, beta = 2",
            base(100_000, 10, 2.0, OracleMode::Exact, "out/small-team-exact", true),
        ),
        (
            "small-team-approx",
            "4 tasks, 2 agents, 2-approximate oracle, T = 1e5, 10 trials, beta = 2",
            base(
                100_000,
                10,
                2.0,
                OracleMode::Approximate { alpha: 1.0 },
                "out/small-team-approx",
                true,
            ),
        ),
        (
            "small-team-long",
            "4 tasks, 2 agents, exact oracle, T = 2e6, 50 trials, beta = 90",
            base(2_000_000, 50, 90.0, OracleMode::Exact, "out/small-team-long", false),
        ),
    ]
}

pub fn preset(name: &str) -> Option<RunConfig> {
    presets()
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, _, c)| c)
}

impl RunConfig {
    /// Parses and validates a config; `base_dir` resolves relative instance
    /// file paths.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let (Some(file), Some(dir)) = (&config.instance.file, path.parent()) {
            if file.is_relative() {
                config.instance.file = Some(dir.join(file));
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.trace_stride == 0 {
            return Err(Error::config("trace_stride", "must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be a positive number"));
        }
        if self.horizon < 2 {
            return Err(Error::config("horizon", "must be at least 2"));
        }
        if let OracleMode::Approximate { alpha } = self.oracle {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::config("oracle.alpha", "must be a non-negative number"));
            }
        }
        if !(self.oracle_settings.epsilon_w > 0.0) {
            return Err(Error::config("oracle_settings.epsilon_w", "must be positive"));
        }
        if self.l_bar_override == Some(0) {
            return Err(Error::config("l_bar_override", "must be positive"));
        }
        let inst = &self.instance;
        let inline = inst.capacities.is_some()
            || inst.reward_means.is_some()
            || inst.reward_dists.is_some()
            || inst.time_means.is_some()
            || inst.time_dists.is_some()
            || inst.resource_means.is_some()
            || inst.resource_dists.is_some()
            || inst.c_lower.is_some()
            || inst.c_upper.is_some();
        let sources = usize::from(inst.preset.is_some()) + usize::from(inst.file.is_some()) + usize::from(inline);
        if sources != 1 {
            return Err(Error::config(
                "instance",
                "give exactly one of `preset`, `file` or inline matrices",
            ));
        }
        if let Some(name) = &inst.preset {
            if !INSTANCE_PRESETS.contains(&name.as_str()) {
                return Err(Error::config(
                    "instance.preset",
                    format!("unknown preset `{name}`; known: {}", INSTANCE_PRESETS.join(", ")),
                ));
            }
        }
        Ok(())
    }

    /// The output directory, honoring the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            horizon: self.horizon,
            beta: self.beta,
            init_budget: None,
            oracle: self.oracle,
            settings: self.oracle_settings.clone(),
            trace_stride: self.trace_stride,
            keep_log: self.keep_completion_log,
            audit_rounds: 100,
        }
    }
}

fn matrix_field<S: Scalar>(path: &str, rows: &[Vec<f64>]) -> Result<Matrix<S>> {
    Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| S::lit(v)).collect()).collect())
        .map_err(|e| Error::config(path, e.to_string()))
}

fn convert_dist<S: Scalar>(d: &DistributionSpec<f64>) -> DistributionSpec<S> {
    let v = |x: f64| S::lit(x);
    match d {
        DistributionSpec::BernoulliScaled { high, p, mean } => DistributionSpec::BernoulliScaled {
            high: v(*high),
            p: v(*p),
            mean: v(*mean),
        },
        DistributionSpec::TwoPoint {
            low,
            high,
            p_high,
            mean,
        } => DistributionSpec::TwoPoint {
            low: v(*low),
            high: v(*high),
            p_high: v(*p_high),
            mean: v(*mean),
        },
        DistributionSpec::DiscretePmf { values, probs, mean } => DistributionSpec::DiscretePmf {
            values: values.iter().map(|&x| v(x)).collect(),
            probs: probs.iter().map(|&x| v(x)).collect(),
            mean: v(*mean),
        },
        DistributionSpec::BetaMeanMatched { concentration, mean } => DistributionSpec::BetaMeanMatched {
            concentration: v(*concentration),
            mean: v(*mean),
        },
    }
}

fn dist_field<S: Scalar>(path: &str, rows: &[Vec<DistributionSpec<f64>>]) -> Result<Matrix<DistributionSpec<S>>> {
    Matrix::from_rows(rows.iter().map(|r| r.iter().map(convert_dist).collect()).collect())
        .map_err(|e| Error::config(path, e.to_string()))
}

impl InstanceConfig {
    /// Builds the instance this section describes.
    pub fn build<S: Scalar>(&self) -> Result<ProblemInstance<S>> {
        if let Some(name) = &self.preset {
            return match name.as_str() {
                "small-team" => Ok(presets::small_team::<S>()),
                other => Err(Error::config("instance.preset", format!("unknown preset `{other}`"))),
            };
        }
        if let Some(file) = &self.file {
            let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            let inner: InstanceConfig = toml::from_str(&text)?;
            if inner.preset.is_some() || inner.file.is_some() {
                return Err(Error::config("instance.file", "the file must hold inline matrices"));
            }
            return inner.build();
        }
        let capacities = self
            .capacities
            .as_ref()
            .ok_or_else(|| Error::config("instance.capacities", "missing"))?;
        let c_lower = self.c_lower.ok_or_else(|| Error::config("instance.c_lower", "missing"))?;
        let c_upper = self.c_upper.ok_or_else(|| Error::config("instance.c_upper", "missing"))?;
        let caps: Vec<S> = capacities.iter().map(|&c| S::lit(c)).collect();
        let pick = |name: &str,
                    means: &Option<Vec<Vec<f64>>>,
                    dists: &Option<Vec<Vec<DistributionSpec<f64>>>>,
                    default: &dyn Fn(S) -> DistributionSpec<S>|
         -> Result<Matrix<DistributionSpec<S>>> {
            match (means, dists) {
                (Some(_), Some(_)) => Err(Error::config(
                    format!("instance.{name}_dists"),
                    format!("give either {name}_means or {name}_dists, not both"),
                )),
                (Some(m), None) => Ok(matrix_field::<S>(&format!("instance.{name}_means"), m)?.map(|&v| default(v))),
                (None, Some(d)) => dist_field(&format!("instance.{name}_dists"), d),
                (None, None) => Err(Error::config(
                    format!("instance.{name}_means"),
                    format!("missing (or give {name}_dists)"),
                )),
            }
        };
        let reward = pick("reward", &self.reward_means, &self.reward_dists, &DistributionSpec::bernoulli)?;
        let time = pick("time", &self.time_means, &self.time_dists, &|c| {
            DistributionSpec::two_point_time(c, c_lower, c_upper)
        })?;
        let resource = pick(
            "resource",
            &self.resource_means,
            &self.resource_dists,
            &DistributionSpec::two_point_resource,
        )?;
        ProblemInstance::new(caps, reward, time, resource, c_lower, c_upper, None)
    }
}

/// One row of the phase log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRow {
    pub trial: u64,
    pub s: u64,
    pub t_s: u64,
    pub l_s: u64,
    pub oracle_status: String,
    pub objective: f64,
    pub assignment: String,
}

/// One row of the per-trial traces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub trial: u64,
    pub t: u64,
    pub reward: f64,
    pub violation: f64,
}

/// Per-trial facts recorded in the metadata file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub trial: u64,
    pub rng_stream: u64,
    pub t_1: u64,
    pub phases: u64,
    pub final_reward: f64,
    pub final_violation: f64,
    pub structure_ok: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub structure_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeceiverCheck {
    pub assignment: String,
    pub mean_rounds: f64,
    pub cap: f64,
    pub within_cap: bool,
}

/// Contents of `run_meta.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub init_budget: u64,
    pub l_bar: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_l_bar: Option<u32>,
    pub per_round_opt: f64,
    pub a_star: String,
    pub phase_cap: f64,
    pub trials: Vec<TrialMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deceivers: Vec<DeceiverCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub config: RunConfig,
}

/// Everything an experiment produces, before it is written out.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub meta: RunMeta,
    pub bench: BenchmarkBundle,
    pub summary: Vec<SummaryRow>,
    pub logfit: LogFitReport,
    pub traces: Vec<TraceRow>,
    pub phases: Vec<PhaseRow>,
    pub completions: Vec<crate::env::CompletionRow>,
    pub structure: Vec<StructuralReport>,
}

impl ExperimentResult {
    /// Largest first post-initialization round over all trials.
    pub fn max_t_1(&self) -> u64 {
        self.meta.trials.iter().map(|t| t.t_1).max().unwrap_or(0)
    }
}

/// Runs every trial of `config` and aggregates the results.
pub fn execute(config: &RunConfig) -> Result<ExperimentResult> {
    config.validate()?;
    match config.precision {
        Precision::F64 => execute_with::<f64>(config),
        Precision::F32 => execute_with::<f32>(config),
    }
}

fn execute_with<S: Scalar>(config: &RunConfig) -> Result<ExperimentResult> {
    let instance = config
        .instance
        .build::<S>()?
        .with_l_bar_override(config.l_bar_override)?;
    let (n, m) = (instance.num_tasks(), instance.num_agents());
    let learner = config.learner_config();
    let budget = learner.resolved_budget(instance.c_lower(), instance.c_upper())?;
    bandit::check_horizon(n, m, budget, instance.c_upper(), config.horizon)?;

    let mut notes = Vec::new();
    let l_bar = instance.compute_l_bar_with(&config.oracle_settings)?;
    let true_l_bar = match instance.true_l_bar(&config.oracle_settings) {
        Ok(v) => Some(v),
        Err(_) => {
            notes.push("true maximum simultaneous task count not computed (too large)".to_string());
            None
        }
    };
    let alpha = config.oracle.alpha();
    let bench = match &config.benchmark_pairs {
        Some(pairs) => {
            let a = AssignmentMatrix::from_pairs(n, m, pairs.iter().map(|p| (p[0], p[1])));
            metrics::benchmark_from_assignment(&instance, a, alpha)?
        }
        None => metrics::compute_benchmark(&instance, alpha, &config.oracle_settings).map_err(|e| match e {
            Error::Size(why) => Error::config("benchmark_pairs", format!("required: {why}")),
            other => other,
        })?,
    };

    let run_all = || -> Result<Vec<TrialOutcome<S>>> {
        (0..config.trials)
            .into_par_iter()
            .map(|k| bandit::run(&instance, l_bar, &learner, config.master_seed, k))
            .collect()
    };
    let outcomes = if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(run_all)?
    } else {
        run_all()?
    };

    let summary = metrics::summarize(&instance, &outcomes, &bench)?;
    let max_t_1 = outcomes.iter().map(|o| o.t_1).max().unwrap_or(0);
    let logfit = metrics::report_logfit(&summary, max_t_1);
    let structure: Vec<StructuralReport> = outcomes
        .iter()
        .map(|o| bandit::check_structure(&instance, o))
        .collect();

    let deceivers = match metrics::compute_gaps(&instance, &bench, alpha, config.gap_enumeration_cap) {
        Ok(gaps) => deceiver_checks(&instance, &gaps, &outcomes, l_bar, config.horizon),
        Err(e) => {
            notes.push(format!("gap diagnostics skipped: {e}"));
            Vec::new()
        }
    };

    let mut traces = Vec::new();
    let mut phases = Vec::new();
    let mut completions = Vec::new();
    let mut trials = Vec::new();
    for (o, s) in outcomes.iter().zip(&structure) {
        traces.extend(o.trace.iter().map(|p| TraceRow {
            trial: o.trial,
            t: p.t,
            reward: p.reward,
            violation: p.violation,
        }));
        phases.extend(o.phases.iter().map(|p| PhaseRow {
            trial: o.trial,
            s: p.index,
            t_s: p.start,
            l_s: p.length,
            oracle_status: p.status.to_string(),
            objective: p.objective,
            assignment: p.assignment.to_bitstring(),
        }));
        completions.extend(o.completion_rows.iter().cloned());
        trials.push(TrialMeta {
            trial: o.trial,
            rng_stream: o.trial,
            t_1: o.t_1,
            phases: o.phases.len() as u64 - 1,
            final_reward: o.final_reward,
            final_violation: o.final_violation,
            structure_ok: s.all_hold(),
            structure_failures: s.failures.clone(),
        });
    }

    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        init_budget: budget,
        l_bar,
        true_l_bar,
        per_round_opt: bench.per_round_opt,
        a_star: bench.a_star.to_bitstring(),
        phase_cap: bandit::phase_cap(n, m, instance.c_lower(), instance.c_upper(), config.horizon),
        trials,
        deceivers,
        notes,
        config: config.clone(),
    };
    Ok(ExperimentResult {
        meta,
        bench,
        summary,
        logfit,
        traces,
        phases,
        completions,
        structure,
    })
}

fn deceiver_checks<S: Scalar>(
    instance: &ProblemInstance<S>,
    gaps: &metrics::GapBundle,
    outcomes: &[TrialOutcome<S>],
    l_bar: u32,
    horizon: u64,
) -> Vec<DeceiverCheck> {
    let bounds = metrics::bound_evaluators(instance, gaps, l_bar, horizon);
    let caps: BTreeMap<&AssignmentMatrix, f64> = bounds.deceiver_caps.iter().map(|(a, c)| (a, *c)).collect();
    let mut totals: BTreeMap<AssignmentMatrix, u64> = BTreeMap::new();
    for o in outcomes {
        for (a, k) in &o.deceiver_rounds {
            *totals.entry(a.clone()).or_insert(0) += k;
        }
    }
    let trials = outcomes.len().max(1) as f64;
    totals
        .into_iter()
        .filter_map(|(a, k)| {
            let cap = *caps.get(&a)?;
            let mean_rounds = k as f64 / trials;
            Some(DeceiverCheck {
                assignment: a.to_bitstring(),
                mean_rounds,
                cap,
                within_cap: mean_rounds <= cap,
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes every output file into `dir`; returns the paths written.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(TRACES_FILE);
    write_csv(&path, &TRACE_COLUMNS, &result.traces)?;
    written.push(path);
    let path = dir.join(SUMMARY_FILE);
    write_csv(&path, &metrics::SUMMARY_COLUMNS, &result.summary)?;
    written.push(path);
    let path = dir.join(PHASES_FILE);
    write_csv(&path, &PHASE_COLUMNS, &result.phases)?;
    written.push(path);
    if result.meta.config.keep_completion_log {
        let path = dir.join(COMPLETIONS_FILE);
        write_csv(&path, &COMPLETION_COLUMNS, &result.completions)?;
        written.push(path);
    }
    let path = dir.join(META_FILE);
    fs::write(&path, toml::to_string(&result.meta)?).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    let path = dir.join(LOGFIT_FILE);
    fs::write(&path, toml::to_string(&result.logfit)?).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Runs `config` and writes its outputs to the resolved output directory.
pub fn run_experiment(config: &RunConfig) -> Result<(ExperimentResult, Vec<PathBuf>)> {
    let result = execute(config)?;
    let files = write_outputs(&result, &config.resolved_output_dir())?;
    Ok((result, files))
}

/// Reads a summary CSV back.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(metrics::SUMMARY_COLUMNS) {
        return Err(Error::config(
            path.display().to_string(),
            format!("unexpected summary header {:?}", headers.iter().collect::<Vec<_>>()),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.deserialize(None)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> RunConfig {
        let mut c = preset("small-team-exact").unwrap();
        c.horizon = 6_000;
        c.beta = 0.5;
        c.trials = 3;
        c.trace_stride = 50;
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for (name, _, cfg) in presets() {
            let text = cfg.to_toml_string().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = preset("small-team-exact").unwrap();
        c.trials = 0;
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("trials"));
        assert!(e.is_config_error());
        let text = "horizon = 10\n[instance]\npreset = \"small-team\"\n[oracle]\nmode = \"exact\"\nbogus = 1\n";
        let e = RunConfig::from_toml_str(text).unwrap_err();
        assert!(e.is_config_error());
        assert!(e.to_string().contains("bogus"));
        let text = "horizon = 10\n[instance]\npreset = \"large\"\n[oracle]\nmode = \"exact\"\n";
        assert!(RunConfig::from_toml_str(text).unwrap_err().to_string().contains("instance.preset"));
    }

    #[test]
    fn small_horizon_is_rejected_before_running() {
        let mut c = preset("small-team-exact").unwrap();
        c.horizon = 100;
        c.beta = 90.0;
        let e = execute(&c).unwrap_err();
        assert!(matches!(e, Error::Horizon { .. }));
        assert!(e.to_string().contains("M*N*B*C_u"));
    }

    #[test]
    fn inline_instance_matches_preset_means() {
        let text = r#"
horizon = 5000
beta = 0.5
[instance]
capacities = [1.5, 1.2]
c_lower = 1
c_upper = 3
reward_means = [[0.525, 0.45], [0.45, 0.525], [0.6, 0.5], [0.5, 0.7]]
time_means = [[1.5, 1.5], [1.5, 1.5], [2.0, 2.0], [2.0, 2.0]]
resource_means = [[0.4, 0.6], [0.6, 0.5], [0.4, 0.6], [0.6, 0.7]]
[oracle]
mode = "approximate"
alpha = 1.0
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        let inst = c.instance.build::<f64>().unwrap();
        let preset = presets::small_team::<f64>();
        assert_eq!(inst.reward_means(), preset.reward_means());
        assert_eq!(inst.resource_means(), preset.resource_means());
        let text = text.replace("reward_means", "reward_dists = []\nreward_means");
        let c = RunConfig::from_toml_str(&text).unwrap();
        assert!(c.instance.build::<f64>().is_err());
    }

    #[test]
    fn instance_file_is_resolved_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("inst.toml"),
            "capacities = [1.0]\nc_lower = 1\nc_upper = 2\nreward_means = [[0.5]]\ntime_means = [[1.5]]\nresource_means = [[0.5]]\n",
        )
        .unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "horizon = 1000\n[instance]\nfile = \"inst.toml\"\n[oracle]\nmode = \"exact\"\n").unwrap();
        let c = RunConfig::load(&cfg).unwrap();
        let inst = c.instance.build::<f64>().unwrap();
        assert_eq!(inst.num_tasks(), 1);
    }

    #[test]
    fn outputs_are_deterministic_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let ra = execute(&tiny(&a)).unwrap();
        let files = write_outputs(&ra, &a).unwrap();
        let rb = execute(&tiny(&b)).unwrap();
        write_outputs(&rb, &b).unwrap();
        assert_eq!(files.len(), 6);
        for f in &files {
            let name = f.file_name().unwrap();
            if name == META_FILE {
                continue;
            }
            assert_eq!(fs::read(f).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
        }
        assert!(ra.structure.iter().all(StructuralReport::all_hold));
        assert!(ra.summary.windows(2).all(|w| w[1].mean_v >= w[0].mean_v));

        let meta: RunMeta = toml::from_str(&fs::read_to_string(a.join(META_FILE)).unwrap()).unwrap();
        assert_eq!(meta.config, tiny(&a));
        assert_eq!(meta.l_bar, 4);
        assert_eq!(meta.per_round_opt, ra.bench.per_round_opt);

        let summary = read_summary(&a.join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.len(), ra.summary.len());
        for (x, y) in summary.iter().zip(&ra.summary) {
            assert_eq!(x.t, y.t);
            assert!((x.mean_v - y.mean_v).abs() < 1e-12);
        }
        let header = fs::read_to_string(a.join(PHASES_FILE)).unwrap();
        assert!(header.starts_with("trial,s,t_s,l_s,oracle_status,objective,assignment\n"));
        assert!(header.contains(",init,"));
    }

    #[test]
    fn single_precision_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(dir.path());
        c.precision = Precision::F32;
        c.trials = 2;
        let r = execute(&c).unwrap();
        assert!(r.structure.iter().all(StructuralReport::all_hold));
    }

    #[test]
    fn worker_pool_gives_same_results() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(dir.path());
        let any = execute(&c).unwrap();
        c.workers = 1;
        let one = execute(&c).unwrap();
        assert_eq!(any.summary, one.summary);
        assert_eq!(any.phases, one.phases);
    }
}
