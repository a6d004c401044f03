//! Partition around medoids: greedy BUILD followed by best-improvement SWAP.
//!
//! Rows are deduplicated first and clustered with multiplicity weights.
//! Duplicates share every distance, so the weighted problem has the same
//! optimum and the same tie-breaking (lowest first-occurrence index) as the
//! unweighted one, at a fraction of the memory.

use std::collections::HashMap;

use rayon::prelude::*;

use super::gower::GowerSpace;
use crate::error::{Error, Result};

const SWAP_TOLERANCE: f64 = 1e-12;
const MAX_SWAP_PASSES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PamFit {
    /// Indices into the input rows, ascending. Cluster `c` has medoid `medoids[c]`.
    pub medoids: Vec<usize>,
    /// 0-based cluster of every input row.
    pub assignments: Vec<usize>,
    pub cost: f64,
    /// Cost after BUILD and after each applied swap.
    pub cost_trace: Vec<f64>,
}

/// Dense symmetric dissimilarity matrix over distinct rows.
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let f = &f;
                (0..n).map(move |j| if i == j { 0.0 } else { f(i.min(j), i.max(j)) })
            })
            .collect();
        DistanceMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Distinct rows in first-occurrence order, their weights, and the map from
/// each input row to its distinct index.
pub(crate) struct Dedup {
    pub first_index: Vec<usize>,
    pub weights: Vec<f64>,
    pub of_row: Vec<usize>,
}

pub(crate) fn dedup(rows: &[Vec<f64>]) -> Dedup {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut first_index = Vec::new();
    let mut weights = Vec::new();
    let mut of_row = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let d = *seen.entry(key).or_insert_with(|| {
            first_index.push(i);
            weights.push(0.0);
            first_index.len() - 1
        });
        weights[d] += 1.0;
        of_row.push(d);
    }
    Dedup {
        first_index,
        weights,
        of_row,
    }
}

fn nearest(dist: &DistanceMatrix, medoids: &[usize], i: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, &m) in medoids.iter().enumerate() {
        let d = dist.get(i, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn total_cost(dist: &DistanceMatrix, weights: &[f64], medoids: &[usize]) -> f64 {
    (0..dist.len())
        .map(|i| weights[i] * nearest(dist, medoids, i).1)
        .sum()
}

fn build(dist: &DistanceMatrix, weights: &[f64], k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];

    let first = (0..n)
        .map(|i| (i, (0..n).map(|j| weights[j] * dist.get(i, j)).sum::<f64>()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0;
    medoids.push(first);
    is_medoid[first] = true;
    let mut near: Vec<f64> = (0..n).map(|j| dist.get(j, first)).collect();

    while medoids.len() < k {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for i in (0..n).filter(|&i| !is_medoid[i]) {
            let gain: f64 = (0..n)
                .map(|j| weights[j] * (near[j] - dist.get(j, i)).max(0.0))
                .sum();
            if gain > best.1 {
                best = (i, gain);
            }
        }
        let chosen = best.0;
        medoids.push(chosen);
        is_medoid[chosen] = true;
        for (j, nj) in near.iter_mut().enumerate() {
            *nj = nj.min(dist.get(j, chosen));
        }
    }
    medoids
}

/// Applies the single best cost-lowering swap, if any. Returns the new cost.
fn swap_pass(dist: &DistanceMatrix, weights: &[f64], medoids: &mut [usize]) -> Option<f64> {
    let n = dist.len();
    let k = medoids.len();
    // Nearest and second-nearest medoid distance per point.
    let mut first = vec![(0usize, f64::INFINITY); n];
    let mut second = vec![f64::INFINITY; n];
    for j in 0..n {
        for (c, &m) in medoids.iter().enumerate() {
            let d = dist.get(j, m);
            if d < first[j].1 {
                second[j] = first[j].1;
                first[j] = (c, d);
            } else if d < second[j] {
                second[j] = d;
            }
        }
    }
    let mut is_medoid = vec![false; n];
    for &m in medoids.iter() {
        is_medoid[m] = true;
    }

    let candidates: Vec<(usize, usize, f64)> = (0..k)
        .into_par_iter()
        .map(|slot| {
            let mut best = (slot, usize::MAX, f64::INFINITY);
            for h in (0..n).filter(|&h| !is_medoid[h]) {
                let mut delta = 0.0;
                for j in 0..n {
                    let dh = dist.get(j, h);
                    let (c, dj) = first[j];
                    let new = if c == slot {
                        dh.min(second[j])
                    } else {
                        dh.min(dj)
                    };
                    delta += weights[j] * (new - dj);
                }
                if delta < best.2 {
                    best = (slot, h, delta);
                }
            }
            best
        })
        .collect();
    // Sequential reduction keeps the tie-break independent of scheduling.
    let (slot, h, delta) = candidates
        .into_iter()
        .fold((0, usize::MAX, f64::INFINITY), |best, cur| {
            if cur.2 < best.2 {
                cur
            } else {
                best
            }
        });
    if h == usize::MAX || delta >= -SWAP_TOLERANCE {
        return None;
    }
    medoids[slot] = h;
    Some(total_cost(dist, weights, medoids))
}

/// Weighted BUILD+SWAP over a precomputed matrix. Returns sorted medoid
/// indices and the cost trace.
pub(crate) fn pam_weighted(
    dist: &DistanceMatrix,
    weights: &[f64],
    k: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut medoids = build(dist, weights, k);
    let mut trace = vec![total_cost(dist, weights, &medoids)];
    for _ in 0..MAX_SWAP_PASSES {
        match swap_pass(dist, weights, &mut medoids) {
            Some(cost) => trace.push(cost),
            None => break,
        }
    }
    medoids.sort_unstable();
    (medoids, trace)
}

pub(crate) fn distinct_matrix(rows: &[Vec<f64>], dd: &Dedup, space: &GowerSpace) -> DistanceMatrix {
    DistanceMatrix::from_fn(dd.first_index.len(), |i, j| {
        space.distance_unchecked(&rows[dd.first_index[i]], &rows[dd.first_index[j]])
    })
}

/// Clusters `rows` into `k` groups under Gower's dissimilarity.
///
/// Fails when `k` is zero or exceeds the number of distinct rows.
pub fn pam_cluster(rows: &[Vec<f64>], k: usize, space: &GowerSpace) -> Result<PamFit> {
    if rows.is_empty() {
        return Err(Error::Cluster("no rows to cluster".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != space.width()) {
        return Err(Error::Dimension(format!(
            "row has {} columns, expected {}",
            bad.len(),
            space.width()
        )));
    }
    let dd = dedup(rows);
    let n_distinct = dd.first_index.len();
    if k == 0 || k > n_distinct {
        return Err(Error::Cluster(format!(
            "k = {k} must be in 1..={n_distinct} (distinct rows)"
        )));
    }
    let dist = distinct_matrix(rows, &dd, space);
    let (medoids, cost_trace) = pam_weighted(&dist, &dd.weights, k);
    let assignments = dd
        .of_row
        .iter()
        .map(|&d| nearest(&dist, &medoids, d).0)
        .collect();
    Ok(PamFit {
        medoids: medoids.iter().map(|&d| dd.first_index[d]).collect(),
        assignments,
        cost: *cost_trace.last().expect("non-empty trace"),
        cost_trace,
    })
}

/// Weighted mean silhouette width of a clustering over `rows`.
pub fn silhouette(rows: &[Vec<f64>], assignments: &[usize], space: &GowerSpace) -> Result<f64> {
    if rows.len() != assignments.len() {
        return Err(Error::Dimension("rows and assignments differ in length".into()));
    }
    let dd = dedup(rows);
    let n = dd.first_index.len();
    let dist = distinct_matrix(rows, &dd, space);
    let label: Vec<usize> = dd.first_index.iter().map(|&i| assignments[i]).collect();
    let k = label.iter().copied().max().map_or(0, |m| m + 1);
    let mut cluster_weight = vec![0.0; k];
    for d in 0..n {
        cluster_weight[label[d]] += dd.weights[d];
    }
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; k];
            for j in 0..n {
                sums[label[j]] += dd.weights[j] * dist.get(i, j);
            }
            let own = label[i];
            if cluster_weight[own] <= 1.0 {
                return 0.0;
            }
            let a = sums[own] / (cluster_weight[own] - 1.0);
            let b = (0..k)
                .filter(|&c| c != own && cluster_weight[c] > 0.0)
                .map(|c| sums[c] / cluster_weight[c])
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let total: f64 = dd.weights.iter().sum();
    Ok(per_point
        .iter()
        .zip(&dd.weights)
        .map(|(s, w)| s * w)
        .sum::<f64>()
        / total)
}
