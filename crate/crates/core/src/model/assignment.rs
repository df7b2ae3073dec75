use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Matrix;
use crate::scalar::Scalar;

/// Binary task-by-agent matrix. Entry `(i, m)` set means task `i` is assigned
/// to (or running on) agent `m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    tasks: usize,
    agents: usize,
    bits: Vec<bool>,
}

impl AssignmentMatrix {
    pub fn zeros(tasks: usize, agents: usize) -> Self {
        Self {
            tasks,
            agents,
            bits: vec![false; tasks * agents],
        }
    }

    /// Builds a matrix from `(task, agent)` pairs.
    pub fn from_pairs(
        tasks: usize,
        agents: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut a = Self::zeros(tasks, agents);
        for (i, m) in pairs {
            a.set(i, m, true);
        }
        a
    }

    /// Builds a matrix from a per-task agent choice (`None` = unassigned).
    pub fn from_choices(agents: usize, choices: &[Option<usize>]) -> Self {
        let mut a = Self::zeros(choices.len(), agents);
        for (i, c) in choices.iter().enumerate() {
            if let Some(m) = *c {
                a.set(i, m, true);
            }
        }
        a
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let agents = rows.first().map_or(0, Vec::len);
        let mut a = Self::zeros(rows.len(), agents);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != agents {
                return Err(Error::dim(
                    format!("{agents} columns"),
                    format!("{} in row {i}", row.len()),
                ));
            }
            for (m, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => a.set(i, m, true),
                    other => {
                        return Err(Error::Contract(format!(
                            "assignment entry ({i},{m}) = {other} is not binary"
                        )))
                    }
                }
            }
        }
        Ok(a)
    }

    /// Parses the row-major `0`/`1` string produced by [`Self::to_bitstring`].
    pub fn from_bitstring(tasks: usize, agents: usize, s: &str) -> Result<Self> {
        if s.len() != tasks * agents {
            return Err(Error::dim(tasks * agents, s.len()));
        }
        let mut a = Self::zeros(tasks, agents);
        for (k, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => a.bits[k] = true,
                _ => return Err(Error::Contract(format!("invalid bit `{ch}`"))),
            }
        }
        Ok(a)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tasks, self.agents)
    }

    pub fn get(&self, i: usize, m: usize) -> bool {
        self.bits[i * self.agents + m]
    }

    pub fn set(&mut self, i: usize, m: usize, value: bool) {
        self.bits[i * self.agents + m] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_zero(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.bits[i * self.agents..(i + 1) * self.agents]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Agent holding task `i`, if exactly one does (first one otherwise).
    pub fn agent_of(&self, i: usize) -> Option<usize> {
        (0..self.agents).find(|&m| self.get(i, m))
    }

    /// Tasks assigned to agent `m`, ascending.
    pub fn tasks_of(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.tasks).filter(move |&i| self.get(i, m))
    }

    /// Set entries in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let agents = self.agents;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / agents, k % agents))
    }

    pub fn ensure_shape(&self, tasks: usize, agents: usize) -> Result<()> {
        if self.shape() == (tasks, agents) {
            Ok(())
        } else {
            Err(Error::dim(
                format!("{tasks}x{agents}"),
                format!("{}x{}", self.tasks, self.agents),
            ))
        }
    }

    /// Membership in the set of possible assignments: every task held by at
    /// most one agent.
    pub fn rows_at_most_one(&self) -> bool {
        (0..self.tasks).all(|i| self.row_sum(i) <= 1)
    }

    /// Entrywise `self <= other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !(a && b))
    }

    /// Entrywise sum of two matrices with disjoint support.
    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        other.ensure_shape(self.tasks, self.agents)?;
        if !self.is_disjoint(other) {
            return Err(Error::Contract(
                "sum of assignments with overlapping support is not binary".into(),
            ));
        }
        Ok(Self {
            tasks: self.tasks,
            agents: self.agents,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// Entrywise difference `self - other`; requires `other <= self`.
    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        other.ensure_shape(self.tasks, self.agents)?;
        if !other.is_subset_of(self) {
            return Err(Error::Contract("difference of assignments is not binary".into()));
        }
        Ok(Self {
            tasks: self.tasks,
            agents: self.agents,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        })
    }

    /// `Σ(w ⊙ a)`.
    pub fn weighted_sum<S: Scalar>(&self, weights: &Matrix<S>) -> S {
        self.pairs().fold(S::zero(), |acc, (i, m)| acc + weights[(i, m)])
    }

    /// Row-major string of `0`/`1` characters.
    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for AssignmentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.agents)
            .map(|m| {
                let ts: Vec<String> = self.tasks_of(m).map(|i| i.to_string()).collect();
                format!("agent{m}<-{{{}}}", ts.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}
