//! 0/1 knapsack solvers used by the approximate oracle.

use std::cmp::Ordering;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Packing<S> {
    pub value: S,
    /// Indices into the item slices, ascending.
    pub items: Vec<usize>,
}

/// Dynamic program over weights rounded up to multiples of `eps`; the
/// capacity is rounded down, so every returned packing fits exactly.
/// Returns `None` for a negative capacity.
pub fn solve_dp<S: Scalar>(values: &[S], weights: &[S], capacity: S, eps: f64) -> Option<Packing<S>> {
    if capacity < -S::tol() {
        return None;
    }
    let to_units = |w: f64| (w / eps - 1e-9).ceil().max(0.0) as usize;
    let units: Vec<usize> = weights.iter().map(|w| to_units(w.as_f64())).collect();
    let total: usize = units.iter().sum();
    let cap = ((capacity.as_f64().max(0.0) / eps + 1e-9).floor() as usize).min(total);

    let n = values.len();
    let mut best = vec![S::zero(); cap + 1];
    let mut take = vec![vec![false; cap + 1]; n];
    for k in 0..n {
        if values[k] <= S::zero() {
            continue;
        }
        let w = units[k];
        if w > cap {
            continue;
        }
        for c in (w..=cap).rev() {
            let with = best[c - w] + values[k];
            if with > best[c] {
                best[c] = with;
                take[k][c] = true;
            }
        }
    }
    let mut items = Vec::new();
    let mut c = cap;
    for k in (0..n).rev() {
        if take[k][c] {
            items.push(k);
            c -= units[k];
        }
    }
    items.reverse();
    let value = items.iter().fold(S::zero(), |a, &k| a + values[k]);
    Some(Packing { value, items })
}

/// Exact branch and bound with the fractional (Dantzig) bound.
pub fn solve_exact<S: Scalar>(values: &[S], weights: &[S], capacity: S) -> Option<Packing<S>> {
    if capacity < -S::tol() {
        return None;
    }
    let tol = S::tol();
    let mut order: Vec<usize> = (0..values.len()).filter(|&k| values[k] > S::zero()).collect();
    // descending value density; zero-weight items first
    order.sort_by(|&a, &b| {
        let da = density(values[a], weights[a]);
        let db = density(values[b], weights[b]);
        db.partial_cmp(&da).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });

    struct Bb<'a, S> {
        values: &'a [S],
        weights: &'a [S],
        order: &'a [usize],
        capacity: S,
        tol: S,
        chosen: Vec<usize>,
        best: Packing<S>,
    }

    impl<S: Scalar> Bb<'_, S> {
        fn bound(&self, k: usize, used: S, value: S) -> S {
            let mut room = self.capacity - used;
            let mut v = value;
            for &j in &self.order[k..] {
                let w = self.weights[j];
                if w <= room {
                    room -= w;
                    v += self.values[j];
                } else {
                    if w > S::zero() {
                        v += self.values[j] * room / w;
                    }
                    break;
                }
            }
            v
        }

        fn go(&mut self, k: usize, used: S, value: S) {
            if value > self.best.value + self.tol
                || (value >= self.best.value - self.tol && self.chosen.len() < self.best.items.len())
            {
                let mut items = self.chosen.clone();
                items.sort_unstable();
                self.best = Packing { value, items };
            }
            if k == self.order.len() || self.bound(k, used, value) <= self.best.value + self.tol {
                return;
            }
            let j = self.order[k];
            let w = self.weights[j];
            if used + w <= self.capacity + self.tol {
                self.chosen.push(j);
                self.go(k + 1, used + w, value + self.values[j]);
                self.chosen.pop();
            }
            self.go(k + 1, used, value);
        }
    }

    let mut bb = Bb {
        values,
        weights,
        order: &order,
        capacity,
        tol,
        chosen: Vec::new(),
        best: Packing {
            value: S::zero(),
            items: Vec::new(),
        },
    };
    bb.go(0, S::zero(), S::zero());
    Some(bb.best)
}

fn density<S: Scalar>(v: S, w: S) -> f64 {
    if w <= S::zero() {
        f64::INFINITY
    } else {
        (v / w).as_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(values: &[f64], weights: &[f64], cap: f64) -> f64 {
        let n = values.len();
        (0u32..1 << n)
            .filter_map(|mask| {
                let (mut v, mut w) = (0.0, 0.0);
                for k in 0..n {
                    if mask & (1 << k) != 0 {
                        v += values[k];
                        w += weights[k];
                    }
                }
                (w <= cap + 1e-9).then_some(v)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn classic_instance() {
        let values = [60.0, 100.0, 120.0];
        let weights = [1.0, 2.0, 3.0];
        let p = solve_exact(&values, &weights, 5.0).unwrap();
        assert_eq!(p.value, 220.0);
        assert_eq!(p.items, vec![1, 2]);
        let d = solve_dp(&values, &weights, 5.0, 1e-3).unwrap();
        assert_eq!(d.value, 220.0);
        assert_eq!(d.items, vec![1, 2]);
    }

    #[test]
    fn negative_capacity_is_infeasible() {
        assert!(solve_exact(&[1.0], &[0.1], -0.5).is_none());
        assert!(solve_dp(&[1.0], &[0.1], -0.5, 1e-3).is_none());
    }

    proptest! {
        #[test]
        fn exact_matches_brute_force(
            items in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..10),
            cap in 0.0f64..3.0,
        ) {
            let values: Vec<f64> = items.iter().map(|p| p.0).collect();
            let weights: Vec<f64> = items.iter().map(|p| p.1).collect();
            let p = solve_exact(&values, &weights, cap).unwrap();
            prop_assert!((p.value - brute(&values, &weights, cap)).abs() < 1e-9);
            let used: f64 = p.items.iter().map(|&k| weights[k]).sum();
            prop_assert!(used <= cap + 1e-9);
        }

        #[test]
        fn dp_exact_on_grid_weights(
            items in proptest::collection::vec((0.0f64..1.0, 0u32..100), 0..10),
            cap in 0u32..300,
        ) {
            let values: Vec<f64> = items.iter().map(|p| p.0).collect();
            let weights: Vec<f64> = items.iter().map(|p| p.1 as f64 / 100.0).collect();
            let cap = cap as f64 / 100.0;
            let p = solve_dp(&values, &weights, cap, 1e-2).unwrap();
            prop_assert!((p.value - brute(&values, &weights, cap)).abs() < 1e-9);
        }

        #[test]
        fn dp_never_overfills(
            items in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..10),
            cap in 0.0f64..3.0,
        ) {
            let values: Vec<f64> = items.iter().map(|p| p.0).collect();
            let weights: Vec<f64> = items.iter().map(|p| p.1).collect();
            let p = solve_dp(&values, &weights, cap, 1e-3).unwrap();
            let used: f64 = p.items.iter().map(|&k| weights[k]).sum();
            prop_assert!(used <= cap + 1e-9);
            prop_assert!(p.value <= brute(&values, &weights, cap) + 1e-9);
        }
    }
}
