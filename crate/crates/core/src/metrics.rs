//! Benchmarks, regret and violation aggregation, gap quantities, reference
//! bound curves and least-squares trend fits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{self, TrialOutcome};
use crate::env::{CompletionRecord, EnvState};
use crate::error::{Error, Result};
use crate::model::{AssignmentMatrix, DistributionSpec, Matrix, ProblemInstance};
use crate::oracle::{self, OracleInput, OracleMode, OracleSettings};
use crate::scalar::Scalar;

/// Best feasible per-round reward rate and the assignment achieving it.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkBundle {
    pub q: Matrix<f64>,
    pub a_star: AssignmentMatrix,
    pub per_round_opt: f64,
    pub alpha: f64,
    pub c_upper: u32,
}

impl BenchmarkBundle {
    /// `(T + C_u) Σ(q ⊙ a*)`, an upper bound on the expected reward of any
    /// feasible policy over `T` rounds.
    pub fn opt_upper(&self, horizon: u64) -> f64 {
        (horizon + u64::from(self.c_upper)) as f64 * self.per_round_opt
    }
}

/// Solves `max Σ(q ⊙ a)` over the truly feasible set exactly.
pub fn compute_benchmark<S: Scalar>(
    instance: &ProblemInstance<S>,
    alpha: f64,
    settings: &OracleSettings,
) -> Result<BenchmarkBundle> {
    let q = instance.per_round_reward_matrix();
    let (n, m) = q.shape();
    let input = OracleInput {
        weights: q.clone(),
        est_loads: instance.resource_means().clone(),
        slack_terms: Matrix::zeros(n, m),
        capacities: instance.capacities().to_vec(),
        l_bar: 1,
        mode: OracleMode::Exact,
    };
    let out = oracle::solve_exact(&input, settings)?;
    Ok(BenchmarkBundle {
        q: q.map(|v| v.as_f64()),
        per_round_opt: out.objective.as_f64(),
        a_star: out.assignment,
        alpha,
        c_upper: instance.c_upper(),
    })
}

/// Benchmark with a user-supplied optimal assignment, for instances too large
/// for the exact search.
pub fn benchmark_from_assignment<S: Scalar>(
    instance: &ProblemInstance<S>,
    a_star: AssignmentMatrix,
    alpha: f64,
) -> Result<BenchmarkBundle> {
    if !instance.is_feasible(&a_star)? {
        return Err(Error::Instance("supplied optimal assignment is infeasible".into()));
    }
    let q = instance.per_round_reward_matrix();
    Ok(BenchmarkBundle {
        per_round_opt: a_star.weighted_sum(&q).as_f64(),
        q: q.map(|v| v.as_f64()),
        a_star,
        alpha,
        c_upper: instance.c_upper(),
    })
}

fn check_grid<S>(traces: &[TrialOutcome<S>]) -> Result<Vec<u64>> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Aggregation("no trials to aggregate".into()))?;
    let grid: Vec<u64> = first.trace.iter().map(|p| p.t).collect();
    for tr in traces {
        if tr.horizon != first.horizon {
            return Err(Error::Aggregation(format!(
                "trial {} has horizon {} while trial {} has {}",
                tr.trial, tr.horizon, first.trial, first.horizon
            )));
        }
        if tr.trace.len() != grid.len() || tr.trace.iter().zip(&grid).any(|(p, &t)| p.t != t) {
            return Err(Error::Aggregation(format!(
                "trial {} was recorded on a different round grid",
                tr.trial
            )));
        }
    }
    Ok(grid)
}

/// Mean over trials of the cumulative counted reward at each recorded round.
pub fn reward_trace<S>(traces: &[TrialOutcome<S>]) -> Result<Vec<(u64, f64)>> {
    let grid = check_grid(traces)?;
    let k = traces.len() as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(j, &t)| (t, traces.iter().map(|tr| tr.trace[j].reward).sum::<f64>() / k))
        .collect())
}

/// Mean over trials of the cumulative violation at each recorded round.
pub fn violation_trace<S>(traces: &[TrialOutcome<S>]) -> Result<Vec<(u64, f64)>> {
    let grid = check_grid(traces)?;
    let k = traces.len() as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(j, &t)| (t, traces.iter().map(|tr| tr.trace[j].violation).sum::<f64>() / k))
        .collect())
}

/// Regret against the per-round proxy, `t Σ(q ⊙ a*) / (1 + α) - mean E_t`.
pub fn regret_trace<S>(
    traces: &[TrialOutcome<S>],
    bench: &BenchmarkBundle,
    alpha: f64,
) -> Result<Vec<(u64, f64)>> {
    Ok(reward_trace(traces)?
        .into_iter()
        .map(|(t, e)| (t, regret_proxy(bench, alpha, t, e)))
        .collect())
}

pub fn regret_proxy(bench: &BenchmarkBundle, alpha: f64, t: u64, mean_reward: f64) -> f64 {
    t as f64 * bench.per_round_opt / (1.0 + alpha) - mean_reward
}

/// Conservative variant using `(t + C_u) Σ(q ⊙ a*)`.
pub fn regret_upper(bench: &BenchmarkBundle, alpha: f64, t: u64, mean_reward: f64) -> f64 {
    bench.opt_upper(t) / (1.0 + alpha) - mean_reward
}

/// Counted reward of the starts at rounds `<= t`, recomputed from a log.
pub fn reward_from_records<S: Scalar>(records: &[CompletionRecord<S>], t: u64) -> f64 {
    records
        .iter()
        .filter(|r| r.task.counted && r.task.start_round <= t)
        .map(|r| r.task.reward.as_f64())
        .sum()
}

/// One aggregated row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: u64,
    pub mean_e: f64,
    pub mean_v: f64,
    pub regret_proxy_alpha0: f64,
    pub regret_proxy_alpha: f64,
    pub regret_upper_alpha0: f64,
    pub regret_upper_alpha: f64,
    pub phase_cap: f64,
}

/// Column names of the summary table, in order.
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "t",
    "mean_E",
    "mean_V",
    "regret_proxy_alpha0",
    "regret_proxy_alpha",
    "regret_upper_alpha0",
    "regret_upper_alpha",
    "phase_cap",
];

pub fn summarize<S: Scalar>(
    instance: &ProblemInstance<S>,
    traces: &[TrialOutcome<S>],
    bench: &BenchmarkBundle,
) -> Result<Vec<SummaryRow>> {
    let rewards = reward_trace(traces)?;
    let violations = violation_trace(traces)?;
    let (n, m) = (instance.num_tasks(), instance.num_agents());
    let (cl, cu) = (instance.c_lower(), instance.c_upper());
    Ok(rewards
        .into_iter()
        .zip(violations)
        .map(|((t, e), (_, v))| SummaryRow {
            t,
            mean_e: e,
            mean_v: v,
            regret_proxy_alpha0: regret_proxy(bench, 0.0, t, e),
            regret_proxy_alpha: regret_proxy(bench, bench.alpha, t, e),
            regret_upper_alpha0: regret_upper(bench, 0.0, t, e),
            regret_upper_alpha: regret_upper(bench, bench.alpha, t, e),
            phase_cap: bandit::phase_cap(n, m, cl, cu, t.max(2)),
        })
        .collect())
}

/// Sub-optimality and violation gaps of every possible assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct GapBundle {
    pub alpha: f64,
    /// `Δ^α_a` for every feasible assignment.
    pub delta_a: Vec<(AssignmentMatrix, f64)>,
    /// `Δ^α_im`; `None` where no feasible assignment containing the pair has
    /// a positive gap.
    pub delta_im: Matrix<Option<f64>>,
    pub delta_underbar: Option<f64>,
    /// Per-agent overload `Δ^L_am` of every infeasible possible assignment.
    pub delta_l_am: Vec<(AssignmentMatrix, Vec<f64>)>,
    /// `Δ^L_a = Σ_m Δ^L_am`, aligned with `delta_l_am`.
    pub delta_l_a: Vec<f64>,
    pub delta_l_im: Matrix<f64>,
    /// Pairs that belong to some feasible assignment.
    pub feasible_pairs: Matrix<bool>,
}

/// Every possible assignment of an `n × m` instance, in lexicographic order
/// of per-task choices (unassigned first).
pub fn enumerate_possible(n: usize, m: usize) -> impl Iterator<Item = AssignmentMatrix> {
    let total = (m as u64 + 1).checked_pow(n as u32).unwrap_or(u64::MAX);
    (0..total).map(move |mut code| {
        let mut choices = vec![None; n];
        for slot in choices.iter_mut().rev() {
            let c = (code % (m as u64 + 1)) as usize;
            code /= m as u64 + 1;
            *slot = c.checked_sub(1);
        }
        AssignmentMatrix::from_choices(m, &choices)
    })
}

/// Computes all gap families by enumeration; refuses instances with more
/// than `max_assignments` possible assignments.
pub fn compute_gaps<S: Scalar>(
    instance: &ProblemInstance<S>,
    bench: &BenchmarkBundle,
    alpha: f64,
    max_assignments: u64,
) -> Result<GapBundle> {
    let (n, m) = (instance.num_tasks(), instance.num_agents());
    let total = (m as u64 + 1).checked_pow(n as u32);
    if total.is_none_or(|c| c > max_assignments) {
        return Err(Error::Size(format!(
            "{}^{} possible assignments exceed the enumeration cap {max_assignments}",
            m + 1,
            n
        )));
    }
    let caps: Vec<f64> = instance.capacities().iter().map(|c| c.as_f64()).collect();
    let f = instance.resource_means().map(|v| v.as_f64());
    let target = bench.per_round_opt / (1.0 + alpha);
    let target0 = bench.per_round_opt;

    let mut delta_a = Vec::new();
    let mut delta_l_am = Vec::new();
    let mut delta_l_a = Vec::new();
    let mut delta_im: Matrix<Option<f64>> = Matrix::filled(n, m, None);
    let mut delta0_im: Matrix<Option<f64>> = Matrix::filled(n, m, None);
    for a in enumerate_possible(n, m) {
        if instance.is_feasible(&a)? {
            let value = a.weighted_sum(&bench.q);
            let gap = target - value;
            let gap0 = target0 - value;
            for idx in a.pairs() {
                if gap > 1e-12 {
                    delta_im[idx] = Some(delta_im[idx].map_or(gap, |d: f64| d.min(gap)));
                }
                if gap0 > 1e-12 {
                    delta0_im[idx] = Some(delta0_im[idx].map_or(gap0, |d: f64| d.min(gap0)));
                }
            }
            delta_a.push((a, gap));
        } else {
            let mut load = vec![0.0; m];
            for (i, k) in a.pairs() {
                load[k] += f[(i, k)];
            }
            let per_agent: Vec<f64> = load
                .iter()
                .zip(&caps)
                .map(|(l, c)| (l - c).max(0.0))
                .collect();
            delta_l_a.push(per_agent.iter().sum());
            delta_l_am.push((a, per_agent));
        }
    }
    let delta_l_im = Matrix::from_fn(n, m, |i, k| (f[(i, k)] - caps[k]).max(0.0));
    let feasible_pairs = Matrix::from_fn(n, m, |i, k| f[(i, k)] <= caps[k] + 1e-12);
    let delta_underbar = if alpha == 0.0 {
        feasible_pairs
            .indexed()
            .filter(|&(idx, &ok)| ok && !bench.a_star.get(idx.0, idx.1))
            .filter_map(|(idx, _)| delta0_im[idx])
            .reduce(f64::min)
    } else {
        feasible_pairs
            .indexed()
            .filter(|&(_, &ok)| ok)
            .filter_map(|(idx, _)| delta_im[idx])
            .reduce(f64::min)
    };
    Ok(GapBundle {
        alpha,
        delta_a,
        delta_im,
        delta_underbar,
        delta_l_am,
        delta_l_a,
        delta_l_im,
        feasible_pairs,
    })
}

/// Explicit reference quantities and shape-only bound curves.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub horizon: u64,
    /// Per infeasible assignment: cap on its rounds of execution
    /// `6 ln(T+1) L̄² / (max_m Δ^L_am)²`.
    pub deceiver_caps: Vec<(AssignmentMatrix, f64)>,
    pub phase_cap: f64,
    pub c_tilde: Matrix<f64>,
    /// Shape of the violation bound (no universal constant).
    pub violation_shape: f64,
    /// Shape of the regret bound (no universal constant); `None` when the
    /// smallest gap is undefined.
    pub regret_shape: Option<f64>,
}

/// `6 ln(T+1) L̄² / (max_m Δ^L_am)²`; `None` for feasible assignments.
pub fn deceiver_cap(l_bar: u32, max_overload: f64, horizon: u64) -> Option<f64> {
    (max_overload > 0.0).then(|| {
        6.0 * ((horizon + 1) as f64).ln() * f64::from(l_bar).powi(2) / max_overload.powi(2)
    })
}

/// `C̃ = (1/c̄)(2√1.5 + (4/c̄)(√(3σ²) + 15 (C_u - C_l) √(C_l / (90 C_u))))²`.
pub fn c_tilde(mean_time: f64, var_time: f64, c_lower: u32, c_upper: u32) -> f64 {
    let (cl, cu) = (f64::from(c_lower), f64::from(c_upper));
    let inner = (3.0 * var_time).sqrt() + 15.0 * (cu - cl) * (cl / (90.0 * cu)).sqrt();
    (2.0 * 1.5f64.sqrt() + 4.0 / mean_time * inner).powi(2) / mean_time
}

/// `d_im(t) = √((C̃ / c̄) ln t / T_im)`.
pub fn d_im(c_tilde: f64, mean_time: f64, t: u64, completions: u64) -> f64 {
    (c_tilde / mean_time * (t as f64).ln() / completions as f64).sqrt()
}

pub fn bound_evaluators<S: Scalar>(
    instance: &ProblemInstance<S>,
    gaps: &GapBundle,
    l_bar: u32,
    horizon: u64,
) -> BoundReport {
    let (n, m) = (instance.num_tasks(), instance.num_agents());
    let (cl, cu) = (instance.c_lower(), instance.c_upper());
    let ln_t = (horizon as f64).ln();
    let lb = f64::from(l_bar);
    let deceiver_caps: Vec<(AssignmentMatrix, f64)> = gaps
        .delta_l_am
        .iter()
        .filter_map(|(a, per)| {
            let worst = per.iter().copied().fold(0.0, f64::max);
            deceiver_cap(l_bar, worst, horizon).map(|c| (a.clone(), c))
        })
        .collect();
    let var = instance.time_variances();
    let c_tilde = Matrix::from_fn(n, m, |i, k| {
        c_tilde(instance.time_means()[(i, k)].as_f64(), var[(i, k)].as_f64(), cl, cu)
    });
    let deceiver_sum: f64 = gaps
        .delta_l_am
        .iter()
        .map(|(_, per)| per.iter().copied().fold(0.0, f64::max))
        .filter(|&w| w > 0.0)
        .map(|w| lb * lb * ln_t / (w * w))
        .sum();
    let worst_total = gaps.delta_l_a.iter().copied().fold(0.0, f64::max);
    let (fcl, fcu) = (f64::from(cl), f64::from(cu));
    let violation_shape = fcu * fcu / fcl * ln_t + deceiver_sum + lb * worst_total;
    let regret_shape = gaps.delta_underbar.map(|gap| {
        (1.0 / gap + fcu) * fcu / (fcl * fcl) * (n * m) as f64 * lb * ln_t + deceiver_sum * lb / fcl
    });
    BoundReport {
        horizon,
        deceiver_caps,
        phase_cap: bandit::phase_cap(n, m, cl, cu, horizon),
        c_tilde,
        violation_shape,
        regret_shape,
    }
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub aic: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::Aggregation(format!("need at least 3 paired points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Aggregation("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        1.0 - rss / syy
    } else if rss <= f64::EPSILON {
        1.0
    } else {
        0.0
    };
    let aic = nf * (rss / nf).max(1e-300).ln() + 4.0;
    Ok(LineFit {
        slope,
        intercept,
        r2,
        aic,
    })
}

/// Fits of a series against `ln t` and against `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub points: usize,
    pub from_t: u64,
    pub log: LineFit,
    pub linear: LineFit,
    /// True when the `ln t` model has the lower AIC (equivalently, the
    /// higher R², both models having two parameters).
    pub log_preferred: bool,
}

/// Minimum number of points a trend fit accepts.
pub const MIN_FIT_POINTS: usize = 20;

/// Fits the points with `t > from_t`.
pub fn fit_trend(series: &[(u64, f64)], from_t: u64) -> Result<TrendFit> {
    let kept: Vec<&(u64, f64)> = series.iter().filter(|(t, _)| *t > from_t && *t >= 1).collect();
    if kept.len() < MIN_FIT_POINTS {
        return Err(Error::Aggregation(format!(
            "only {} points after t = {from_t}; need {MIN_FIT_POINTS}",
            kept.len()
        )));
    }
    let ys: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let ln: Vec<f64> = kept.iter().map(|p| (p.0 as f64).ln()).collect();
    let lin: Vec<f64> = kept.iter().map(|p| p.0 as f64).collect();
    let log = fit_line(&ln, &ys)?;
    let linear = fit_line(&lin, &ys)?;
    Ok(TrendFit {
        points: kept.len(),
        from_t,
        log,
        linear,
        log_preferred: log.aic < linear.aic,
    })
}

/// Trend fits of the violation and the exact-benchmark regret.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFitReport {
    pub violation: Option<TrendFit>,
    pub regret_alpha0: Option<TrendFit>,
    pub notes: Vec<String>,
}

pub fn report_logfit(rows: &[SummaryRow], from_t: u64) -> LogFitReport {
    let mut notes = Vec::new();
    let mut fit = |name: &str, series: Vec<(u64, f64)>| match fit_trend(&series, from_t) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("{name} fit skipped: {e}"));
            None
        }
    };
    let violation = fit("violation", rows.iter().map(|r| (r.t, r.mean_v)).collect());
    let regret_alpha0 = fit(
        "regret",
        rows.iter().map(|r| (r.t, r.regret_proxy_alpha0)).collect(),
    );
    LogFitReport {
        violation,
        regret_alpha0,
        notes,
    }
}

/// Accumulated counted reward of a stationary policy that holds `a` forever,
/// restarting each of its tasks as soon as it completes.
pub fn stationary_policy_reward<S: Scalar>(
    instance: &ProblemInstance<S>,
    a: &AssignmentMatrix,
    horizon: u64,
    master_seed: u64,
    trial: u64,
) -> Result<f64> {
    let (rng, _) = bandit::trial_streams(master_seed, trial);
    let mut env = EnvState::new(instance, rng, false);
    for _ in 0..horizon {
        let start = bandit::round_action(a, &env.current_b())?;
        env.step(&start)?;
    }
    Ok(env.final_metrics(horizon)?.0.as_f64())
}

/// Exceedance frequencies of the reward and completion-time radii.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coverage {
    pub reward_rate: f64,
    pub reward_limit: f64,
    pub reward_se: f64,
    pub time_rate: f64,
    pub time_limit: f64,
    pub time_se: f64,
}

impl Coverage {
    pub fn reward_ok(&self) -> bool {
        self.reward_rate <= self.reward_limit + 3.0 * self.reward_se
    }

    pub fn time_ok(&self) -> bool {
        self.time_rate <= self.time_limit + 3.0 * self.time_se
    }
}

/// Monte-Carlo frequency with which `|r̂ - r̄| >= d^r` and `|ĉ - c̄| >= d^c`
/// after `samples` observations, radii evaluated at round `t`.
///
/// Standard errors are binomial at the nominal levels `2/t²` and `4/t²`.
#[allow(clippy::too_many_arguments)]
pub fn confidence_coverage<S: Scalar>(
    reward: &DistributionSpec<S>,
    time: &DistributionSpec<S>,
    c_lower: u32,
    c_upper: u32,
    t: u64,
    samples: u64,
    resamples: u64,
    seed: u64,
) -> Coverage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_t = (t as f64).ln();
    let k = samples as f64;
    let r_bar = reward.declared_mean().as_f64();
    let c_bar = time.declared_mean().as_f64();
    let spread = f64::from(c_upper - c_lower);
    let d_r = (1.5 * ln_t / k).sqrt();
    let (mut r_hits, mut c_hits) = (0u64, 0u64);
    for _ in 0..resamples {
        let mut r_sum = 0.0;
        let (mut mean, mut m2) = (0.0, 0.0);
        for j in 1..=samples {
            r_sum += reward.sample(&mut rng).as_f64();
            let d = f64::from(time.sample_integer(&mut rng));
            let delta = d - mean;
            mean += delta / j as f64;
            m2 += delta * (d - mean);
        }
        if (r_sum / k - r_bar).abs() >= d_r {
            r_hits += 1;
        }
        let d_c = (3.0 * (m2 / k) * ln_t / k).sqrt() + 9.0 * spread * ln_t / k;
        if (mean - c_bar).abs() >= d_c {
            c_hits += 1;
        }
    }
    let n = resamples as f64;
    let tt = (t as f64).powi(2);
    let se = |p: f64| (p * (1.0 - p) / n).sqrt();
    Coverage {
        reward_rate: r_hits as f64 / n,
        reward_limit: 2.0 / tt,
        reward_se: se(2.0 / tt),
        time_rate: c_hits as f64 / n,
        time_limit: 4.0 / tt,
        time_se: se(4.0 / tt),
    }
}
