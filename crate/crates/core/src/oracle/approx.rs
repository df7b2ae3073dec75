//! Local-ratio sequential-knapsack scheme for the assignment subproblem.
//!
//! Agents are visited in descending capacity order. Each agent solves a
//! knapsack over residual profits `w_im - w_{i, owner(i)}`, so a task already
//! held by an earlier agent is only taken over when that pays. With exact
//! per-agent knapsacks over a family closed under inclusion this is a
//! 2-approximation.
//!
//! The per-agent family here is only closed under removal of tasks other than
//! the one carrying the largest slack (the anchor), so each agent's knapsack
//! enumerates its anchor. A takeover can strip an earlier agent of its
//! anchor; such agents are re-packed from their remaining and the unowned
//! tasks, and a final greedy pass adds any task that still fits.

use crate::error::{Error, Result};
use crate::model::AssignmentMatrix;
use crate::oracle::knapsack::{self, Packing};
use crate::oracle::{OracleInput, OracleOutput, OracleSettings, OracleStatus};
use crate::scalar::Scalar;

/// `(1+α)`-approximate maximizer over the estimated feasible set.
///
/// The scheme certifies `α = 1`; smaller `α` is refused.
pub fn solve_approx<S: Scalar>(
    input: &OracleInput<S>,
    alpha: f64,
    settings: &OracleSettings,
) -> Result<OracleOutput<S>> {
    if !(alpha >= 1.0 - 1e-12) {
        return Err(Error::Capability(format!(
            "the sequential-knapsack scheme certifies alpha >= 1, requested alpha = {alpha}"
        )));
    }
    Ok(local_ratio(input, settings))
}

pub(crate) fn local_ratio<S: Scalar>(input: &OracleInput<S>, settings: &OracleSettings) -> OracleOutput<S> {
    let n = input.tasks();
    let mut order: Vec<usize> = (0..input.agents()).collect();
    order.sort_by(|&a, &b| {
        input.capacities[b]
            .partial_cmp(&input.capacities[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut owner: Vec<Option<usize>> = vec![None; n];
    for &m in &order {
        let profit: Vec<S> = (0..n)
            .map(|i| input.weights[(i, m)] - owner[i].map_or(S::zero(), |k| input.weights[(i, k)]))
            .collect();
        let candidates: Vec<usize> = (0..n).collect();
        for i in best_agent_set(input, m, &profit, &candidates, settings) {
            owner[i] = Some(m);
        }
    }

    for &m in &order {
        let held: Vec<usize> = (0..n).filter(|&i| owner[i] == Some(m)).collect();
        let ok = input
            .agent_lcb(m, held.iter().copied())
            .is_none_or(|lcb| lcb <= input.capacities[m] + S::tol());
        if ok {
            continue;
        }
        for &i in &held {
            owner[i] = None;
        }
        let candidates: Vec<usize> = (0..n).filter(|&i| owner[i].is_none()).collect();
        let profit: Vec<S> = (0..n).map(|i| input.weights[(i, m)]).collect();
        for i in best_agent_set(input, m, &profit, &candidates, settings) {
            owner[i] = Some(m);
        }
    }

    for &m in &order {
        let mut free: Vec<usize> = (0..n)
            .filter(|&i| owner[i].is_none() && input.weights[(i, m)] > S::zero())
            .collect();
        free.sort_by(|&a, &b| {
            input.weights[(b, m)]
                .partial_cmp(&input.weights[(a, m)])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for i in free {
            let trial = (0..n).filter(|&k| owner[k] == Some(m)).chain(std::iter::once(i));
            if input
                .agent_lcb(m, trial)
                .is_some_and(|lcb| lcb <= input.capacities[m] + S::tol())
            {
                owner[i] = Some(m);
            }
        }
    }

    let assignment = AssignmentMatrix::from_choices(input.agents(), &owner);
    OracleOutput {
        objective: assignment.weighted_sum(&input.weights),
        assignment,
        status: OracleStatus::Approximate,
    }
}

/// Best set for agent `m` among `candidates` under `profit`, enumerating
/// the anchor task. Returns an empty set when nothing beats zero.
fn best_agent_set<S: Scalar>(
    input: &OracleInput<S>,
    m: usize,
    profit: &[S],
    candidates: &[usize],
    settings: &OracleSettings,
) -> Vec<usize> {
    let tol = S::tol();
    let l_bar = input.l_bar_scalar();
    let mut best_value = S::zero();
    let mut best_set: Vec<usize> = Vec::new();
    for &j in candidates {
        let anchor_slack = input.slack_terms[(j, m)];
        let room = input.capacities[m] + l_bar * anchor_slack - input.est_loads[(j, m)];
        if room < -tol {
            continue;
        }
        let others: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&i| i != j && profit[i] > S::zero() && input.slack_terms[(i, m)] <= anchor_slack)
            .collect();
        let values: Vec<S> = others.iter().map(|&i| profit[i]).collect();
        let weights: Vec<S> = others.iter().map(|&i| input.est_loads[(i, m)]).collect();
        let packing = if others.len() <= settings.exact_knapsack_items {
            knapsack::solve_exact(&values, &weights, room)
        } else {
            knapsack::solve_dp(&values, &weights, room, settings.epsilon_w)
        };
        let Some(Packing { value, items }) = packing else {
            continue;
        };
        let total = profit[j] + value;
        let size = items.len() + 1;
        if total > best_value + tol || (total >= best_value - tol && size < best_set.len()) {
            let mut set: Vec<usize> = items.iter().map(|&k| others[k]).collect();
            set.push(j);
            set.sort_unstable();
            best_value = total;
            best_set = set;
        }
    }
    best_set
}
