//! Clustering-based evaluation of a feature subset.
//!
//! One evaluation run clusters the samples restricted to the selected
//! columns with k-means and scores the partition against the ground truth
//! with accuracy under the best one-to-one cluster/class matching, NMI
//! normalized by the larger entropy, and purity.

use std::collections::HashMap;

use ndarray::ArrayView2;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringRun {
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub seed: u64,
    pub iterations: usize,
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ndarray::ArrayView1<'_, f64>, centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Distance-weighted seeding: first center uniform, each next center drawn
/// with probability proportional to squared distance from the chosen set.
fn seed_centers(data: ArrayView2<'_, f64>, c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.nrows();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![data.row(first).to_vec()];
    let mut dist: Vec<f64> = data
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, &centers[0]))
        .collect();

    while centers.len() < c {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total implies a positive entry")
        } else {
            // every point coincides with a center; take any unused point
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let center = data.row(pick).to_vec();
        for (d, r) in dist.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(r, &center));
        }
        centers.push(center);
    }
    centers
}

/// One k-means run with `c` clusters, deterministic in `seed`.
pub fn kmeans(data: ArrayView2<'_, f64>, c: usize, seed: u64) -> Result<ClusteringRun> {
    let (n, dim) = data.dim();
    if c < 2 || c > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count must satisfy 2 <= c <= {n}, got {c}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(data, c, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;

    loop {
        let mut changed = false;
        for (i, row) in data.rows().into_iter().enumerate() {
            let (k, _) = nearest(row, &centers);
            if assignments[i] != k {
                assignments[i] = k;
                changed = true;
            }
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; c];
        let mut counts = vec![0usize; c];
        for (row, &k) in data.rows().into_iter().zip(&assignments) {
            counts[k] += 1;
            for (s, x) in sums[k].iter_mut().zip(row) {
                *s += x;
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        while let Some(empty) = counts.iter().position(|&m| m == 0) {
            let donor = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .map(|i| (i, sq_dist(data.row(i), &centers[assignments[i]])))
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                })
                .map(|(i, _)| i)
                .expect("c <= n leaves a cluster with more than one point");
            let old = assignments[donor];
            counts[old] -= 1;
            counts[empty] += 1;
            assignments[donor] = empty;
            centers[empty] = data.row(donor).to_vec();
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == old).collect();
            centers[old] = (0..dim)
                .map(|j| members.iter().map(|&i| data[[i, j]]).sum::<f64>() / members.len() as f64)
                .collect();
            changed = true;
        }

        if !changed || iterations >= KMEANS_MAX_ITERS {
            break;
        }
    }

    let inertia = data
        .rows()
        .into_iter()
        .zip(&assignments)
        .map(|(r, &k)| sq_dist(r, &centers[k]))
        .sum();
    Ok(ClusteringRun {
        assignments,
        inertia,
        seed,
        iterations,
    })
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

/// `table[p][t]` = number of samples in predicted cluster `p` and class `t`.
fn contingency(pred: &[usize], truth: &[usize]) -> Result<Vec<Vec<usize>>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predicted vs true labels",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::DegenerateData("no samples to evaluate".into()));
    }
    let (p, np) = dense_ids(pred);
    let (t, nt) = dense_ids(truth);
    let mut table = vec![vec![0usize; nt]; np];
    for (a, b) in p.into_iter().zip(t) {
        table[a][b] += 1;
    }
    Ok(table)
}

/// Clustering accuracy under the best one-to-one cluster-to-class mapping.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let size = table.len().max(table[0].len());
    let mut weights = Matrix::new(size, size, 0i64);
    for (i, row) in table.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            weights[(i, j)] = count as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the larger of the two entropies.
///
/// Two single-class labelings are the same partition and score 1.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let h_pred = entropy(row_sums.iter().copied(), n);
    let h_truth = entropy(col_sums.iter().copied(), n);
    let denom = h_pred.max(h_truth);
    if denom == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let joint = count as f64 / n;
            mi += joint * (count as f64 * n / (row_sums[i] * col_sums[j]) as f64).ln();
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Fraction of samples that belong to their cluster's majority class.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let majority: usize = table
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

impl RunMetrics {
    pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(Self {
            acc: acc(pred, truth)?,
            nmi: nmi(pred, truth)?,
            purity: purity(pred, truth)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let len = values.len() as f64;
        let mean = values.iter().sum::<f64>() / len;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Metrics summarized over repeated clustering runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub runs: Vec<RunMetrics>,
    pub acc: MeanStd,
    pub nmi: MeanStd,
    pub purity: MeanStd,
}

impl MetricsRecord {
    pub fn from_runs(runs: Vec<RunMetrics>) -> Self {
        let pick = |f: fn(&RunMetrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            acc: pick(|r| r.acc),
            nmi: pick(|r| r.nmi),
            purity: pick(|r| r.purity),
            runs,
        }
    }
}

/// Clusters `data` `seeds.len()` times and summarizes the three metrics.
pub fn evaluate_selection(
    data: ArrayView2<'_, f64>,
    truth: &[usize],
    c: usize,
    seeds: &[u64],
) -> Result<MetricsRecord> {
    let runs = seeds
        .iter()
        .map(|&seed| {
            let run = kmeans(data, c, seed)?;
            RunMetrics::evaluate(&run.assignments, truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsRecord::from_runs(runs))
}
