//! Clustering metrics: Hungarian-matched accuracy, normalized mutual
//! information and the predicted-cluster count used to spot degeneracy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: usize,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub predicted_clusters: usize,
}

fn check_lengths(y: &[usize], yhat: &[usize]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "{} true labels vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start node.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of samples correctly labeled under the best one-to-one mapping
/// from predicted to true cluster ids.
pub fn hungarian_accuracy(y: &[usize], yhat: &[usize], k: usize) -> Result<f64> {
    check_lengths(y, yhat)?;
    if y.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    if let Some(&label) = y.iter().chain(yhat).find(|&&l| l >= k) {
        return Err(Error::Label { label, k });
    }
    // counts[pred][true]
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in y.iter().zip(yhat) {
        counts[p][t] += 1;
    }
    let cost: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| -(c as f64)).collect())
        .collect();
    let mapping = min_cost_assignment(&cost);
    let matched: usize = mapping.iter().enumerate().map(|(p, &t)| counts[p][t]).sum();
    Ok(matched as f64 / y.len() as f64)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(Y; Yhat) / sqrt(H(Y) H(Yhat))` with
/// natural logarithms. Two constant partitions score 1; a single constant
/// partition against a non-constant one scores 0.
pub fn nmi(y: &[usize], yhat: &[usize]) -> Result<f64> {
    check_lengths(y, yhat)?;
    if y.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    let ky = y.iter().max().unwrap() + 1;
    let kp = yhat.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0usize; kp]; ky];
    let mut cy = vec![0usize; ky];
    let mut cp = vec![0usize; kp];
    for (&t, &p) in y.iter().zip(yhat) {
        joint[t][p] += 1;
        cy[t] += 1;
        cp[p] += 1;
    }
    let n = y.len() as f64;
    let hy = entropy(&cy, n);
    let hp = entropy(&cp, n);
    if hy == 0.0 && hp == 0.0 {
        return Ok(1.0);
    }
    if hy == 0.0 || hp == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (t, row) in joint.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (cy[t] as f64 * cp[p] as f64)).ln();
            }
        }
    }
    Ok((mi / (hy * hp).sqrt()).clamp(0.0, 1.0))
}

/// Number of distinct predicted labels.
pub fn predicted_cluster_count(yhat: &[usize]) -> usize {
    yhat.iter().collect::<BTreeSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(hungarian_accuracy(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap(), 1.0);
        assert_eq!(hungarian_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0], 2).unwrap(), 1.0);
        assert_eq!(hungarian_accuracy(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap(), 0.5);
        assert!(hungarian_accuracy(&[0, 1], &[0], 2).is_err());
        assert!(hungarian_accuracy(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn nmi_cases() {
        assert!((nmi(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&[1, 1, 1], &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 1, 1], &[0, 0, 0]).unwrap(), 0.0);
        let a = [0, 0, 1, 2, 2, 1];
        let b = [1, 1, 0, 0, 2, 2];
        assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nmi_hand_value() {
        // contingency [[2, 0], [1, 1]]: H(Y) = ln 2, H(Yhat) = H(3/4, 1/4)
        let y = [0, 0, 1, 1];
        let p = [0, 0, 0, 1];
        let hy = 2f64.ln();
        let hp = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let mi = 0.5 * (0.5f64 / (0.5 * 0.75)).ln() + 0.25 * (0.25f64 / (0.5 * 0.75)).ln()
            + 0.25 * (0.25f64 / (0.5 * 0.25)).ln();
        assert!((nmi(&y, &p).unwrap() - mi / (hy * hp).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cluster_count() {
        assert_eq!(predicted_cluster_count(&[2, 2, 2]), 1);
        assert_eq!(predicted_cluster_count(&[0, 1, 2, 2]), 3);
        assert_eq!(predicted_cluster_count(&[2, 2, 1, 0]), 3);
    }

    #[test]
    fn assignment_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }
}
