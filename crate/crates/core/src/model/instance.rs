use crate::error::{Error, Result};
use crate::model::{AssignmentMatrix, DistributionSpec, Matrix};
use crate::oracle::{self, OracleSettings, OracleInput, OracleMode};
use crate::scalar::Scalar;

/// Static ground truth of a task-assignment problem.
///
/// Rows index tasks, columns index agents. Immutable once built; the cached
/// mean matrices always agree with the declared means of the distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance<S: Scalar> {
    capacities: Vec<S>,
    reward_dists: Matrix<DistributionSpec<S>>,
    time_dists: Matrix<DistributionSpec<S>>,
    resource_dists: Matrix<DistributionSpec<S>>,
    c_lower: u32,
    c_upper: u32,
    l_bar_override: Option<u32>,
    reward_means: Matrix<S>,
    time_means: Matrix<S>,
    resource_means: Matrix<S>,
}

impl<S: Scalar> ProblemInstance<S> {
    pub fn new(
        capacities: Vec<S>,
        reward_dists: Matrix<DistributionSpec<S>>,
        time_dists: Matrix<DistributionSpec<S>>,
        resource_dists: Matrix<DistributionSpec<S>>,
        c_lower: u32,
        c_upper: u32,
        l_bar_override: Option<u32>,
    ) -> Result<Self> {
        let (n, m) = reward_dists.shape();
        if n == 0 || m == 0 {
            return Err(Error::Instance("need at least one task and one agent".into()));
        }
        for (name, dists) in [("time", &time_dists), ("resource", &resource_dists)] {
            if dists.shape() != (n, m) {
                return Err(Error::dim(
                    format!("{n}x{m} {name} distributions"),
                    format!("{}x{}", dists.rows(), dists.cols()),
                ));
            }
        }
        if capacities.len() != m {
            return Err(Error::dim(format!("{m} capacities"), capacities.len()));
        }
        if let Some(bad) = capacities.iter().find(|&&l| !(l >= S::zero()) || !l.is_finite()) {
            return Err(Error::Instance(format!("capacity {bad} must be finite and >= 0")));
        }
        if c_lower < 1 || c_upper < c_lower {
            return Err(Error::Instance(format!(
                "completion-time bounds need 1 <= C_l <= C_u, got C_l = {c_lower}, C_u = {c_upper}"
            )));
        }
        if l_bar_override == Some(0) {
            return Err(Error::Instance("l_bar_override must be positive".into()));
        }
        let at = |i: usize, k: usize, what: &str, e: Error| {
            Error::Instance(format!("{what} distribution ({i},{k}): {e}"))
        };
        for ((i, k), d) in reward_dists.indexed() {
            d.validate().map_err(|e| at(i, k, "reward", e))?;
            d.check_support(S::zero(), S::one())
                .map_err(|e| at(i, k, "reward", e))?;
        }
        for ((i, k), d) in time_dists.indexed() {
            d.validate().map_err(|e| at(i, k, "time", e))?;
            d.check_integer_support(c_lower, c_upper)
                .map_err(|e| at(i, k, "time", e))?;
        }
        for ((i, k), d) in resource_dists.indexed() {
            d.validate().map_err(|e| at(i, k, "resource", e))?;
            d.check_support(S::zero(), S::one())
                .map_err(|e| at(i, k, "resource", e))?;
        }
        let reward_means = reward_dists.map(DistributionSpec::declared_mean);
        let time_means = time_dists.map(DistributionSpec::declared_mean);
        let resource_means = resource_dists.map(DistributionSpec::declared_mean);
        Ok(Self {
            capacities,
            reward_dists,
            time_dists,
            resource_dists,
            c_lower,
            c_upper,
            l_bar_override,
            reward_means,
            time_means,
            resource_means,
        })
    }

    /// Builds an instance from mean matrices using the default families:
    /// Bernoulli rewards, two-point times on `{C_l, C_u}` and equal-weight
    /// two-point resource draws.
    pub fn from_means(
        capacities: Vec<S>,
        reward_means: &Matrix<S>,
        time_means: &Matrix<S>,
        resource_means: &Matrix<S>,
        c_lower: u32,
        c_upper: u32,
    ) -> Result<Self> {
        let lo = S::count(c_lower as u64);
        let hi = S::count(c_upper as u64);
        if let Some(bad) = time_means.iter().find(|&&c| c < lo || c > hi) {
            return Err(Error::Instance(format!(
                "mean completion time {bad} outside [{c_lower}, {c_upper}]"
            )));
        }
        for (what, means) in [("reward", reward_means), ("resource", resource_means)] {
            if let Some(bad) = means.iter().find(|&&v| v < S::zero() || v > S::one()) {
                return Err(Error::Instance(format!("{what} mean {bad} outside [0,1]")));
            }
        }
        Self::new(
            capacities,
            reward_means.map(|&r| DistributionSpec::bernoulli(r)),
            time_means.map(|&c| DistributionSpec::two_point_time(c, c_lower, c_upper)),
            resource_means.map(|&f| DistributionSpec::two_point_resource(f)),
            c_lower,
            c_upper,
            None,
        )
    }

    pub fn with_l_bar_override(mut self, l_bar: Option<u32>) -> Result<Self> {
        if l_bar == Some(0) {
            return Err(Error::Instance("l_bar_override must be positive".into()));
        }
        self.l_bar_override = l_bar;
        Ok(self)
    }

    pub fn num_tasks(&self) -> usize {
        self.reward_means.rows()
    }

    pub fn num_agents(&self) -> usize {
        self.reward_means.cols()
    }

    pub fn capacities(&self) -> &[S] {
        &self.capacities
    }

    pub fn c_lower(&self) -> u32 {
        self.c_lower
    }

    pub fn c_upper(&self) -> u32 {
        self.c_upper
    }

    pub fn l_bar_override(&self) -> Option<u32> {
        self.l_bar_override
    }

    pub fn reward_dists(&self) -> &Matrix<DistributionSpec<S>> {
        &self.reward_dists
    }

    pub fn time_dists(&self) -> &Matrix<DistributionSpec<S>> {
        &self.time_dists
    }

    pub fn resource_dists(&self) -> &Matrix<DistributionSpec<S>> {
        &self.resource_dists
    }

    /// Mean rewards `r̄`.
    pub fn reward_means(&self) -> &Matrix<S> {
        &self.reward_means
    }

    /// Mean completion times `c̄`.
    pub fn time_means(&self) -> &Matrix<S> {
        &self.time_means
    }

    /// Mean per-round resource draws `f̄`.
    pub fn resource_means(&self) -> &Matrix<S> {
        &self.resource_means
    }

    /// Variance of each completion-time law.
    pub fn time_variances(&self) -> Matrix<S> {
        self.time_dists.map(DistributionSpec::variance)
    }

    fn check(&self, a: &AssignmentMatrix) -> Result<()> {
        a.ensure_shape(self.num_tasks(), self.num_agents())
    }

    /// Every task held by at most one agent.
    pub fn is_possible(&self, a: &AssignmentMatrix) -> Result<bool> {
        self.check(a)?;
        Ok(a.rows_at_most_one())
    }

    /// Per-agent expected load `Σ_i f̄_im a_im`.
    pub fn expected_load(&self, a: &AssignmentMatrix) -> Result<Vec<S>> {
        self.check(a)?;
        let mut load = vec![S::zero(); self.num_agents()];
        for (i, m) in a.pairs() {
            load[m] += self.resource_means[(i, m)];
        }
        Ok(load)
    }

    /// Possible and within every agent's capacity in expectation.
    pub fn is_feasible(&self, a: &AssignmentMatrix) -> Result<bool> {
        if !self.is_possible(a)? {
            return Ok(false);
        }
        let load = self.expected_load(a)?;
        Ok(load
            .iter()
            .zip(&self.capacities)
            .all(|(&l, &cap)| l <= cap + S::tol()))
    }

    /// Expected overload `Σ_m max{0, Σ_i f̄_im a_im - L_m}`.
    pub fn overload(&self, a: &AssignmentMatrix) -> Result<S> {
        let load = self.expected_load(a)?;
        Ok(load
            .iter()
            .zip(&self.capacities)
            .fold(S::zero(), |acc, (&l, &cap)| acc + (l - cap).max(S::zero())))
    }

    /// Per-round reward rates `q_im = r̄_im / c̄_im`.
    pub fn per_round_reward_matrix(&self) -> Matrix<S> {
        Matrix::from_fn(self.num_tasks(), self.num_agents(), |i, m| {
            self.reward_means[(i, m)] / self.time_means[(i, m)]
        })
    }

    /// Largest number of tasks any feasible assignment runs at once; the
    /// override wins when set.
    pub fn compute_l_bar(&self) -> Result<u32> {
        self.compute_l_bar_with(&OracleSettings::default())
    }

    pub fn compute_l_bar_with(&self, budget: &OracleSettings) -> Result<u32> {
        if let Some(l) = self.l_bar_override {
            return Ok(l);
        }
        self.true_l_bar(budget)
    }

    /// Ground-truth maximum feasible cardinality, ignoring any override.
    pub fn true_l_bar(&self, budget: &OracleSettings) -> Result<u32> {
        let (n, m) = (self.num_tasks(), self.num_agents());
        let input = OracleInput {
            weights: Matrix::filled(n, m, S::one()),
            est_loads: self.resource_means.clone(),
            slack_terms: Matrix::zeros(n, m),
            capacities: self.capacities.clone(),
            l_bar: 1,
            mode: OracleMode::Exact,
        };
        match oracle::solve_exact(&input, budget) {
            Ok(out) => Ok(out.assignment.count() as u32),
            Err(Error::Size(why)) => Err(Error::OverrideRequired(why)),
            Err(e) => Err(e),
        }
    }
}
