//! Built-in problem instances.

use crate::model::{DistributionSpec, Matrix, ProblemInstance};
use crate::scalar::Scalar;

pub const SMALL_TEAM_REWARDS: [[f64; 2]; 4] = [[0.525, 0.45], [0.45, 0.525], [0.6, 0.5], [0.5, 0.7]];
pub const SMALL_TEAM_TIMES: [[f64; 2]; 4] = [[1.5, 1.5], [1.5, 1.5], [2.0, 2.0], [2.0, 2.0]];
pub const SMALL_TEAM_RESOURCES: [[f64; 2]; 4] = [[0.4, 0.6], [0.6, 0.5], [0.4, 0.6], [0.6, 0.7]];
pub const SMALL_TEAM_CAPACITIES: [f64; 2] = [1.5, 1.2];

fn lift<S: Scalar, const M: usize>(rows: &[[f64; M]]) -> Matrix<S> {
    Matrix::from_fn(rows.len(), M, |i, m| S::lit(rows[i][m]))
}

/// Four tasks, two agents, `L = (1.5, 1.2)`, completion times on `{1,2,3}`.
///
/// Mean time 1.5 is realized as uniform on {1, 2} and mean time 2 as uniform
/// on {1, 3}; rewards are Bernoulli and resource draws use the default
/// two-point law.
pub fn small_team<S: Scalar>() -> ProblemInstance<S> {
    let rewards: Matrix<S> = lift(&SMALL_TEAM_REWARDS);
    let times: Matrix<S> = lift(&SMALL_TEAM_TIMES);
    let resources: Matrix<S> = lift(&SMALL_TEAM_RESOURCES);
    let half = S::lit(0.5);
    let time_dists = times.map(|&c| {
        if c == S::lit(1.5) {
            DistributionSpec::pmf(vec![S::one(), S::lit(2.0)], vec![half, half])
        } else {
            DistributionSpec::pmf(vec![S::one(), S::lit(3.0)], vec![half, half])
        }
    });
    ProblemInstance::new(
        SMALL_TEAM_CAPACITIES.iter().map(|&l| S::lit(l)).collect(),
        rewards.map(|&r| DistributionSpec::bernoulli(r)),
        time_dists,
        resources.map(|&f| DistributionSpec::two_point_resource(f)),
        1,
        3,
        None,
    )
    .expect("small-team preset is valid")
}
