//! Greedy average-linkage agglomeration on threshold-shifted affinities.
//!
//! Every element starts as its own cluster. The pair of clusters with the
//! largest mean shifted affinity `phi - tau` is merged while that mean is
//! strictly positive. Each such merge strictly increases the correlation
//! clustering objective `sum_k sum_{i<j in g_k} (phi(i, j) - tau)`.
//! Ties go to the lexicographically smallest pair of cluster ids, where a
//! cluster's id is its smallest member.

use super::AffinityMatrix;
use crate::error::{Error, Result};

/// Partition plus the mean shifted affinity of every merge, in merge order.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Groups sorted by smallest member; members ascending.
    pub groups: Vec<Vec<usize>>,
    pub merge_values: Vec<f64>,
}

const SYMMETRY_TOLERANCE: f64 = 1e-12;

pub fn check_symmetric(affinity: &AffinityMatrix) -> Result<()> {
    let n = affinity.len();
    for i in 0..n {
        for j in i + 1..n {
            if (affinity.get(i, j) - affinity.get(j, i)).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::Asymmetric { i, j });
            }
        }
    }
    Ok(())
}

/// Best partner `b > a` of row `a`: largest mean, ties to the smallest `b`.
fn row_best(a: usize, active: &[bool], sum: &[f64], size: &[usize], n: usize) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for b in a + 1..n {
        if !active[b] {
            continue;
        }
        let v = sum[a * n + b] / (size[a] * size[b]) as f64;
        if best.is_none_or(|(bv, _)| v > bv) {
            best = Some((v, b));
        }
    }
    best
}

pub fn cluster(affinity: &AffinityMatrix, tau: f64) -> Result<Clustering> {
    check_symmetric(affinity)?;
    if !tau.is_finite() {
        return Err(Error::param("tau", "must be finite"));
    }
    let n = affinity.len();
    let mut sum = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum[i * n + j] = affinity.get(i, j) - tau;
            }
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut best: Vec<Option<(f64, usize)>> =
        (0..n).map(|a| row_best(a, &active, &sum, &size, n)).collect();
    let mut merge_values = Vec::new();

    loop {
        let mut pick: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            if let Some((v, b)) = best[a] {
                if pick.is_none_or(|(pv, _, _)| v > pv) {
                    pick = Some((v, a, b));
                }
            }
        }
        let Some((value, a, b)) = pick else { break };
        if value <= 0.0 {
            break;
        }
        merge_values.push(value);

        // b folds into a; a keeps the smaller id
        active[b] = false;
        size[a] += size[b];
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        for x in 0..n {
            if x == a || !active[x] {
                continue;
            }
            let s = sum[a * n + x] + sum[b * n + x];
            sum[a * n + x] = s;
            sum[x * n + a] = s;
        }
        best[b] = None;
        best[a] = row_best(a, &active, &sum, &size, n);
        for x in 0..b {
            if x == a || !active[x] {
                continue;
            }
            match best[x] {
                Some((_, p)) if p == a || p == b => {
                    best[x] = row_best(x, &active, &sum, &size, n);
                }
                Some((bv, p)) if x < a => {
                    let v = sum[x * n + a] / (size[x] * size[a]) as f64;
                    if v > bv || (v == bv && a < p) {
                        best[x] = Some((v, a));
                    }
                }
                None if x < a => {
                    best[x] = row_best(x, &active, &sum, &size, n);
                }
                _ => {}
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = members
        .into_iter()
        .zip(&active)
        .filter(|(_, &alive)| alive)
        .map(|(mut m, _)| {
            m.sort_unstable();
            m
        })
        .collect();
    groups.sort_by_key(|g| g[0]);
    Ok(Clustering {
        groups,
        merge_values,
    })
}

/// `sum_k sum_{i<j in g_k} (phi(i, j) - tau)`; zero for the all-singleton partition.
pub fn partition_objective(affinity: &AffinityMatrix, tau: f64, groups: &[Vec<usize>]) -> f64 {
    groups
        .iter()
        .map(|g| {
            let mut s = 0.0;
            for (k, &i) in g.iter().enumerate() {
                for &j in &g[k + 1..] {
                    s += affinity.get(i, j) - tau;
                }
            }
            s
        })
        .sum()
}
