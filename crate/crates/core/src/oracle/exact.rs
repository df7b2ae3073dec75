use crate::error::{Error, Result};
use crate::model::AssignmentMatrix;
use crate::oracle::{approx, OracleInput, OracleOutput, OracleSettings, OracleStatus};
use crate::scalar::Scalar;

/// Incumbent ordering: objective first, then fewer tasks. Among exact ties
/// the first leaf reached wins; leaves are visited with "unassigned" before
/// agent 0 before agent 1 and so on, task by task.
#[derive(Clone)]
struct Incumbent<S> {
    choices: Vec<Option<usize>>,
    primary: S,
    value: S,
    count: usize,
}

enum Goal {
    /// Maximize weight subject to the LCB constraint.
    MaxWeight,
    /// Minimize LCB violation, then maximize weight.
    MinViolation,
}

struct Search<'a, S: Scalar> {
    input: &'a OracleInput<S>,
    goal: Goal,
    tol: S,
    l_bar: S,
    /// `weight_tail[k]` = Σ_{i >= k} max(0, max_m w_im).
    weight_tail: Vec<S>,
    /// `slack_tail[k][m]` = max_{i >= k} d_im (0 when empty).
    slack_tail: Vec<Vec<S>>,
    choices: Vec<Option<usize>>,
    load: Vec<S>,
    max_slack: Vec<Option<S>>,
    value: S,
    count: usize,
    nodes: u64,
    max_nodes: u64,
    floor: Option<S>,
    best: Option<Incumbent<S>>,
}

impl<'a, S: Scalar> Search<'a, S> {
    fn new(input: &'a OracleInput<S>, goal: Goal, max_nodes: u64) -> Self {
        let (n, m) = input.weights.shape();
        let mut weight_tail = vec![S::zero(); n + 1];
        let mut slack_tail = vec![vec![S::zero(); m]; n + 1];
        for i in (0..n).rev() {
            let row_best = input.weights.row(i).iter().fold(S::zero(), |a, &w| a.max(w));
            weight_tail[i] = weight_tail[i + 1] + row_best;
            for k in 0..m {
                slack_tail[i][k] = slack_tail[i + 1][k].max(input.slack_terms[(i, k)]);
            }
        }
        Self {
            input,
            goal,
            tol: S::tol(),
            l_bar: input.l_bar_scalar(),
            weight_tail,
            slack_tail,
            choices: vec![None; n],
            load: vec![S::zero(); m],
            max_slack: vec![None; m],
            value: S::zero(),
            count: 0,
            nodes: 0,
            max_nodes,
            floor: None,
            best: None,
        }
    }

    fn agent_excess(&self, m: usize) -> S {
        match self.max_slack[m] {
            None => S::zero(),
            Some(d) => (self.load[m] - self.l_bar * d - self.input.capacities[m]).max(S::zero()),
        }
    }

    /// True when some agent's LCB load already exceeds capacity no matter
    /// which of the remaining tasks it receives.
    fn hopeless(&self, next: usize) -> bool {
        (0..self.input.agents()).any(|m| match self.max_slack[m] {
            None => false,
            Some(d) => {
                let best_slack = d.max(self.slack_tail[next][m]);
                self.load[m] - self.l_bar * best_slack > self.input.capacities[m] + self.tol
            }
        })
    }

    fn offer(&mut self) {
        let violation = (0..self.input.agents()).fold(S::zero(), |a, m| a + self.agent_excess(m));
        let primary = match self.goal {
            Goal::MaxWeight => {
                if violation > self.tol {
                    return;
                }
                self.value
            }
            Goal::MinViolation => -violation,
        };
        let better = match &self.best {
            None => true,
            Some(b) => {
                if primary > b.primary + self.tol {
                    true
                } else if primary < b.primary - self.tol {
                    false
                } else if self.value > b.value + self.tol {
                    // only reachable for MinViolation, where weight is secondary
                    true
                } else if self.value < b.value - self.tol {
                    false
                } else {
                    self.count < b.count
                }
            }
        };
        if better {
            self.best = Some(Incumbent {
                choices: self.choices.clone(),
                primary,
                value: self.value,
                count: self.count,
            });
        }
    }

    fn prune(&self, k: usize) -> bool {
        let bound = self.value + self.weight_tail[k];
        match self.goal {
            Goal::MaxWeight => {
                if self.hopeless(k) {
                    return true;
                }
                if let Some(floor) = self.floor {
                    if bound < floor - self.tol {
                        return true;
                    }
                }
                match &self.best {
                    None => false,
                    Some(b) => {
                        bound < b.value - self.tol
                            || (bound <= b.value + self.tol && self.count >= b.count)
                    }
                }
            }
            Goal::MinViolation => match &self.best {
                // violation cannot drop below zero, so a zero-violation
                // incumbent can only lose on weight
                Some(b) if b.primary >= -self.tol => {
                    bound < b.value - self.tol
                        || (bound <= b.value + self.tol && self.count >= b.count)
                }
                _ => false,
            },
        }
    }

    fn run(&mut self, k: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(Error::Size(format!("node budget {} exhausted", self.max_nodes)));
        }
        if k == self.input.tasks() {
            self.offer();
            return Ok(());
        }
        if self.prune(k) {
            return Ok(());
        }
        self.run(k + 1)?;
        for m in 0..self.input.agents() {
            let w = self.input.weights[(k, m)];
            let saved_slack = self.max_slack[m];
            self.choices[k] = Some(m);
            self.load[m] += self.input.est_loads[(k, m)];
            let d = self.input.slack_terms[(k, m)];
            self.max_slack[m] = Some(saved_slack.map_or(d, |s| s.max(d)));
            self.value += w;
            self.count += 1;
            let res = self.run(k + 1);
            self.count -= 1;
            self.value -= w;
            self.max_slack[m] = saved_slack;
            self.load[m] -= self.input.est_loads[(k, m)];
            self.choices[k] = None;
            res?;
        }
        Ok(())
    }
}

fn check_size<S: Scalar>(input: &OracleInput<S>, settings: &OracleSettings) -> Result<()> {
    let cells = input.tasks() * input.agents();
    if cells > settings.max_cells {
        return Err(Error::Size(format!(
            "{cells} task-agent cells exceed the configured limit of {}",
            settings.max_cells
        )));
    }
    Ok(())
}

fn finish<S: Scalar>(input: &OracleInput<S>, best: Incumbent<S>, status: OracleStatus) -> OracleOutput<S> {
    let assignment = AssignmentMatrix::from_choices(input.agents(), &best.choices);
    OracleOutput {
        objective: assignment.weighted_sum(&input.weights),
        assignment,
        status,
    }
}

/// Maximizer of `Σ(weights ⊙ a)` over the estimated feasible set, by
/// depth-first branch and bound over tasks.
pub fn solve_exact<S: Scalar>(input: &OracleInput<S>, settings: &OracleSettings) -> Result<OracleOutput<S>> {
    check_size(input, settings)?;
    let mut search = Search::new(input, Goal::MaxWeight, settings.max_nodes);
    // any feasible heuristic value is a valid pruning floor
    let seed = approx::local_ratio(input, settings);
    search.floor = Some(seed.objective);
    search.run(0)?;
    let best = search
        .best
        .expect("the empty assignment always satisfies the constraint");
    Ok(finish(input, best, OracleStatus::Optimal))
}

/// Minimizer of the LCB violation `Σ_m max{Σ_i f̂ a - l_bar max d - L_m, 0}`
/// over all possible assignments; ties go to the larger weight, then fewer
/// tasks.
pub fn solve_fallback<S: Scalar>(input: &OracleInput<S>, settings: &OracleSettings) -> Result<OracleOutput<S>> {
    check_size(input, settings)?;
    let mut search = Search::new(input, Goal::MinViolation, settings.max_nodes);
    search.run(0)?;
    let best = search.best.expect("search visits at least one leaf");
    Ok(finish(input, best, OracleStatus::Fallback))
}
