//! Per-pair sampling distributions for rewards, completion times and
//! resource draws.
//!
//! Only the support and mean of each distribution matter to the learner, so
//! the families here are the simplest ones that hit a requested mean exactly
//! on the required support. Every spec carries its declared mean, and
//! [`DistributionSpec::validate`] checks it against the analytic mean.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec<S> {
    /// `high` with probability `p`, otherwise 0.
    BernoulliScaled { high: S, p: S, mean: S },
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint { low: S, high: S, p_high: S, mean: S },
    /// Finite pmf over `values`.
    DiscretePmf { values: Vec<S>, probs: Vec<S>, mean: S },
    /// Beta(mean * concentration, (1 - mean) * concentration) on [0, 1].
    BetaMeanMatched { concentration: S, mean: S },
}

impl<S: Scalar> DistributionSpec<S> {
    /// Bernoulli on {0, 1} with the given mean.
    pub fn bernoulli(mean: S) -> Self {
        DistributionSpec::BernoulliScaled {
            high: S::one(),
            p: mean,
            mean,
        }
    }

    /// Two-point law on `{c_lower, c_upper}` matching `mean`.
    pub fn two_point_time(mean: S, c_lower: u32, c_upper: u32) -> Self {
        let low = S::count(c_lower as u64);
        let high = S::count(c_upper as u64);
        let p_high = if c_upper == c_lower {
            S::zero()
        } else {
            (mean - low) / (high - low)
        };
        DistributionSpec::TwoPoint {
            low,
            high,
            p_high,
            mean,
        }
    }

    /// Equal-weight two-point law on `{max(0, 2f - 1), min(1, 2f)}`, which
    /// has mean `f` and support inside [0, 1].
    pub fn two_point_resource(mean: S) -> Self {
        let two = S::lit(2.0);
        DistributionSpec::TwoPoint {
            low: (two * mean - S::one()).max(S::zero()),
            high: (two * mean).min(S::one()),
            p_high: S::lit(0.5),
            mean,
        }
    }

    /// Finite pmf; the declared mean is computed from the pmf.
    pub fn pmf(values: Vec<S>, probs: Vec<S>) -> Self {
        let mean = values
            .iter()
            .zip(&probs)
            .fold(S::zero(), |acc, (&v, &p)| acc + v * p);
        DistributionSpec::DiscretePmf {
            values,
            probs,
            mean,
        }
    }

    pub fn beta(mean: S, concentration: S) -> Self {
        DistributionSpec::BetaMeanMatched {
            concentration,
            mean,
        }
    }

    pub fn declared_mean(&self) -> S {
        match *self {
            DistributionSpec::BernoulliScaled { mean, .. }
            | DistributionSpec::TwoPoint { mean, .. }
            | DistributionSpec::DiscretePmf { mean, .. }
            | DistributionSpec::BetaMeanMatched { mean, .. } => mean,
        }
    }

    pub fn analytic_mean(&self) -> S {
        match self {
            DistributionSpec::BernoulliScaled { high, p, .. } => *high * *p,
            DistributionSpec::TwoPoint {
                low, high, p_high, ..
            } => *low + *p_high * (*high - *low),
            DistributionSpec::DiscretePmf { values, probs, .. } => values
                .iter()
                .zip(probs)
                .fold(S::zero(), |acc, (&v, &p)| acc + v * p),
            DistributionSpec::BetaMeanMatched { mean, .. } => *mean,
        }
    }

    pub fn variance(&self) -> S {
        match self {
            DistributionSpec::BernoulliScaled { high, p, .. } => *high * *high * *p * (S::one() - *p),
            DistributionSpec::TwoPoint {
                low, high, p_high, ..
            } => {
                let gap = *high - *low;
                gap * gap * *p_high * (S::one() - *p_high)
            }
            DistributionSpec::DiscretePmf { values, probs, .. } => {
                let mu = self.analytic_mean();
                values
                    .iter()
                    .zip(probs)
                    .fold(S::zero(), |acc, (&v, &p)| acc + p * (v - mu) * (v - mu))
            }
            DistributionSpec::BetaMeanMatched {
                concentration,
                mean,
            } => *mean * (S::one() - *mean) / (*concentration + S::one()),
        }
    }

    /// Points with positive probability; `None` for continuous laws.
    pub fn atoms(&self) -> Option<Vec<S>> {
        match self {
            DistributionSpec::BernoulliScaled { high, p, .. } => {
                let mut v = Vec::new();
                if *p < S::one() {
                    v.push(S::zero());
                }
                if *p > S::zero() {
                    v.push(*high);
                }
                Some(v)
            }
            DistributionSpec::TwoPoint {
                low, high, p_high, ..
            } => {
                let mut v = Vec::new();
                if *p_high < S::one() {
                    v.push(*low);
                }
                if *p_high > S::zero() {
                    v.push(*high);
                }
                Some(v)
            }
            DistributionSpec::DiscretePmf { values, probs, .. } => Some(
                values
                    .iter()
                    .zip(probs)
                    .filter(|(_, &p)| p > S::zero())
                    .map(|(&v, _)| v)
                    .collect(),
            ),
            DistributionSpec::BetaMeanMatched { .. } => None,
        }
    }

    /// Checks parameter ranges and the declared mean against the analytic one.
    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: S| p >= S::zero() && p <= S::one();
        match self {
            DistributionSpec::BernoulliScaled { p, .. } if !prob_ok(*p) => {
                return Err(Error::Distribution(format!("probability {p} outside [0,1]")))
            }
            DistributionSpec::TwoPoint { p_high, low, high, .. } => {
                if !prob_ok(*p_high) {
                    return Err(Error::Distribution(format!(
                        "probability {p_high} outside [0,1]"
                    )));
                }
                if low > high {
                    return Err(Error::Distribution(format!("low {low} exceeds high {high}")));
                }
            }
            DistributionSpec::DiscretePmf { values, probs, .. } => {
                if values.len() != probs.len() || values.is_empty() {
                    return Err(Error::Distribution(
                        "pmf needs equally many (non-zero) values and probabilities".into(),
                    ));
                }
                if !probs.iter().all(|&p| prob_ok(p)) {
                    return Err(Error::Distribution("pmf probability outside [0,1]".into()));
                }
                let total = probs.iter().fold(S::zero(), |a, &p| a + p);
                if (total - S::one()).abs() > S::tol() {
                    return Err(Error::Distribution(format!("pmf sums to {total}")));
                }
            }
            DistributionSpec::BetaMeanMatched {
                concentration,
                mean,
            } => {
                if *concentration <= S::zero() || *mean <= S::zero() || *mean >= S::one() {
                    return Err(Error::Distribution(
                        "beta needs concentration > 0 and mean in (0,1)".into(),
                    ));
                }
            }
            _ => {}
        }
        let gap = (self.analytic_mean() - self.declared_mean()).abs();
        let tol = S::lit(1e-12).max(S::epsilon() * S::lit(16.0));
        if gap > tol {
            return Err(Error::Distribution(format!(
                "declared mean {} differs from analytic mean {}",
                self.declared_mean(),
                self.analytic_mean()
            )));
        }
        Ok(())
    }

    /// Checks that every atom (or the whole continuous support) lies in
    /// `[lo, hi]`.
    pub fn check_support(&self, lo: S, hi: S) -> Result<()> {
        match self.atoms() {
            Some(atoms) => {
                if let Some(bad) = atoms.iter().find(|&&v| v < lo || v > hi) {
                    return Err(Error::Distribution(format!(
                        "support point {bad} outside [{lo}, {hi}]"
                    )));
                }
            }
            None => {
                if lo > S::zero() || hi < S::one() {
                    return Err(Error::Distribution(format!(
                        "continuous support [0,1] not inside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that the law is supported on the integers `c_lower..=c_upper`.
    pub fn check_integer_support(&self, c_lower: u32, c_upper: u32) -> Result<()> {
        let atoms = self.atoms().ok_or_else(|| {
            Error::Distribution("completion times need a discrete law".into())
        })?;
        for v in atoms {
            let r = v.round();
            if (v - r).abs() > S::tol()
                || r < S::count(c_lower as u64)
                || r > S::count(c_upper as u64)
            {
                return Err(Error::Distribution(format!(
                    "completion time {v} not an integer in [{c_lower}, {c_upper}]"
                )));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        match self {
            DistributionSpec::BernoulliScaled { high, p, .. } => {
                if rng.random::<f64>() < p.as_f64() {
                    *high
                } else {
                    S::zero()
                }
            }
            DistributionSpec::TwoPoint {
                low, high, p_high, ..
            } => {
                if rng.random::<f64>() < p_high.as_f64() {
                    *high
                } else {
                    *low
                }
            }
            DistributionSpec::DiscretePmf { values, probs, .. } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p.as_f64();
                    if u < acc {
                        return *v;
                    }
                }
                // rounding slack in the cumulative sum
                *values.last().expect("validated non-empty pmf")
            }
            DistributionSpec::BetaMeanMatched {
                concentration,
                mean,
            } => {
                let k = concentration.as_f64();
                let mu = mean.as_f64();
                let beta = Beta::new(mu * k, (1.0 - mu) * k).expect("validated beta parameters");
                S::lit(beta.sample(rng))
            }
        }
    }

    /// Samples an integer-valued law (completion times).
    pub fn sample_integer<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.sample(rng)
            .round()
            .to_u32()
            .expect("validated integer support")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empirical_mean(d: &DistributionSpec<f64>, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64
    }

    #[test]
    fn default_families_match_means() {
        for &f in &[0.0, 0.2, 0.4, 0.5, 0.6, 0.7, 1.0] {
            let d = DistributionSpec::two_point_resource(f);
            d.validate().unwrap();
            d.check_support(0.0, 1.0).unwrap();
        }
        let t = DistributionSpec::two_point_time(2.0, 1, 3);
        t.validate().unwrap();
        t.check_integer_support(1, 3).unwrap();
        let r = DistributionSpec::bernoulli(0.525);
        r.validate().unwrap();
    }

    #[test]
    fn statistical_self_test() {
        let n = 100_000;
        let specs: [DistributionSpec<f64>; 5] = [
            DistributionSpec::bernoulli(0.525),
            DistributionSpec::two_point_resource(0.7),
            DistributionSpec::two_point_time(1.5, 1, 3),
            DistributionSpec::pmf(vec![1.0, 2.0], vec![0.5, 0.5]),
            DistributionSpec::beta(0.3, 4.0),
        ];
        for d in &specs {
            let sigma = d.variance().sqrt();
            let gap = (empirical_mean(d, n) - d.declared_mean()).abs();
            assert!(gap <= 3.0 * sigma / (n as f64).sqrt(), "{d:?}: gap {gap}");
        }
    }

    #[test]
    fn rejects_mismatched_mean() {
        let d = DistributionSpec::TwoPoint {
            low: 1.0,
            high: 3.0,
            p_high: 0.5,
            mean: 1.5,
        };
        assert!(d.validate().is_err());
        let pmf = DistributionSpec::DiscretePmf {
            values: vec![1.0, 2.0],
            probs: vec![0.5, 0.4],
            mean: 1.4,
        };
        assert!(pmf.validate().is_err());
    }

    #[test]
    fn continuous_law_rejected_for_times() {
        let d = DistributionSpec::beta(0.5, 2.0);
        assert!(d.check_integer_support(1, 3).is_err());
        let frac = DistributionSpec::pmf(vec![1.5, 2.0], vec![0.5, 0.5]);
        assert!(frac.check_integer_support(1, 3).is_err());
    }

    #[test]
    fn variance_of_two_point() {
        let d: DistributionSpec<f64> = DistributionSpec::pmf(vec![1.0, 3.0], vec![0.5, 0.5]);
        assert!((d.variance() - 1.0).abs() < 1e-12);
    }
}
