//! Evaluation metrics for the three benchmark problems.

use serde::{Deserialize, Serialize};

use crate::bench::data::{Localization, Rating};
use crate::measure::AtomicMeasure;
use crate::{Error, Result};

/// Lowest and highest admissible rating.
pub const RATING_RANGE: (f64, f64) = (1.0, 5.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Minimum-cost assignment of rows to distinct columns for a rectangular
/// cost matrix with `rows <= cols`. Returns the column chosen for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols");
    // Potentials and matching use 1-based indices with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn distance(a: &Localization, b: &Localization) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Number of estimate/truth pairs in a maximum one-to-one matching that only
/// pairs points within `radius` of each other. Among maximum matchings the
/// assignment also minimizes the total matched distance.
pub fn count_matches(est: &[Localization], truth: &[Localization], radius: f64) -> usize {
    if est.is_empty() || truth.is_empty() {
        return 0;
    }
    let (rows, cols) = if est.len() <= truth.len() { (est, truth) } else { (truth, est) };
    let penalty = radius.max(0.0) * (rows.len() as f64 + 1.0) + 1.0;
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| {
            cols.iter()
                .map(|b| {
                    let d = distance(a, b);
                    if d <= radius { d } else { penalty }
                })
                .collect()
        })
        .collect();
    hungarian(&cost)
        .iter()
        .enumerate()
        .filter(|&(i, &j)| distance(&rows[i], &cols[j]) <= radius)
        .count()
}

/// Precision, recall and F1 of a localization against ground truth.
///
/// An empty estimate has precision 0; an empty truth has recall 0.
pub fn match_sources(est: &[Localization], truth: &[Localization], radius: f64) -> MatchScore {
    let matched = count_matches(est, truth, radius);
    let precision = if est.is_empty() { 0.0 } else { matched as f64 / est.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { matched as f64 / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    MatchScore { matched, precision, recall, f1 }
}

/// `100 * (1 - ||y_pred - y_test|| / ||y_test - mean(y_test)||)`.
pub fn sysid_score(y_pred: &[f64], y_test: &[f64]) -> Result<f64> {
    if y_pred.len() != y_test.len() {
        return Err(Error::DimensionMismatch { expected: y_test.len(), got: y_pred.len() });
    }
    if y_test.is_empty() {
        return Err(Error::Undefined("empty test sequence".into()));
    }
    let mean = y_test.iter().sum::<f64>() / y_test.len() as f64;
    let spread = y_test.iter().map(|y| (y - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(Error::Undefined("test output is constant".into()));
    }
    let err = y_pred.iter().zip(y_test).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

/// Entry `(i, j)` of `train_mean + sum_k w_k u_k v_k^T`, clamped to the rating range.
pub fn predict_rating(mu: &AtomicMeasure, rows: usize, train_mean: f64, i: usize, j: usize) -> f64 {
    let raw: f64 = mu.atoms.iter().map(|a| a.w * a.theta[i] * a.theta[rows + j]).sum();
    (train_mean + raw).clamp(RATING_RANGE.0, RATING_RANGE.1)
}

/// Root mean squared error of clamped predictions on held-out ratings.
pub fn matcomp_rmse(mu: &AtomicMeasure, rows: usize, test: &[Rating], train_mean: f64) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Undefined("no test ratings".into()));
    }
    let sse: f64 = test
        .iter()
        .map(|r| (predict_rating(mu, rows, train_mean, r.user, r.item) - r.rating).powi(2))
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}

/// Root mean squared error between two equally long sequences.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::Undefined("empty sequence".into()));
    }
    let sse: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::ParameterPoint;
    use proptest::prelude::*;

    fn loc(x: f64, y: f64) -> Localization {
        Localization { x, y, intensity: 1.0 }
    }

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost[0].len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost[0].len()])
    }

    proptest! {
        #[test]
        fn hungarian_is_optimal(n in 1usize..5, extra in 0usize..3, seed in proptest::collection::vec(0.0f64..10.0, 40)) {
            let m = n + extra;
            let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|j| seed[(i * m + j) % 40]).collect()).collect();
            let a = hungarian(&cost);
            let mut cols = a.clone();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(cols.len(), n);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            prop_assert!((total - brute_force_min(&cost)).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_trap_is_avoided() {
        // Greedy nearest matching would pair the middle estimate with the first
        // truth and leave the second truth unmatched.
        let truth = [loc(0.0, 0.0), loc(10.0, 0.0)];
        let est = [loc(4.0, 0.0), loc(-3.0, 0.0)];
        let s = match_sources(&est, &truth, 6.0);
        assert_eq!(s.matched, 2);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn match_examples() {
        let truth = [loc(0.0, 0.0), loc(100.0, 0.0)];
        let s = match_sources(&[loc(3.0, 4.0)], &truth, 5.0);
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        let s = match_sources(&[], &truth, 5.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = match_sources(&[loc(3.0, 4.1)], &truth, 5.0);
        assert_eq!(s.matched, 0);
    }

    #[test]
    fn sysid_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(sysid_score(&y, &y).unwrap(), 100.0);
        assert!((sysid_score(&[2.0, 2.0, 2.0], &y).unwrap()).abs() < 1e-12);
        assert!(matches!(sysid_score(&y, &[1.0, 1.0, 1.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn ratings_are_clamped() {
        let mu = AtomicMeasure::from_parts(&[10.0], &[ParameterPoint(vec![1.0, 1.0])]).unwrap();
        let test = [Rating { user: 0, item: 0, rating: 5.0 }];
        assert_eq!(predict_rating(&mu, 1, 3.0, 0, 0), 5.0);
        assert_eq!(matcomp_rmse(&mu, 1, &test, 3.0).unwrap(), 0.0);
        assert_eq!(matcomp_rmse(&AtomicMeasure::new(), 1, &test, 3.0).unwrap(), 2.0);
    }
}
