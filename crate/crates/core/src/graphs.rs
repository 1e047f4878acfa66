//! Similarity structures over samples, features, and the sample-feature
//! bipartite relation, plus the normalized blocks of the coupled Laplacian.
//!
//! Sample and feature graphs are kNN graphs with Gaussian weights
//! `exp(-gamma * |x_i - x_j|^2 / delta^2)`, where `delta` is the median
//! pairwise Euclidean distance on that side. The neighbor relation is
//! symmetrized by union, self-loops are excluded, and ties at the k-th
//! neighbor go to the lower index.
//!
//! The bipartite graph is dense: sample `i` and feature `j` are joined with
//! weight `exp(-gamma * (x_ij - mean_j)^2 / delta^2)`, where `delta` is the
//! largest per-feature median absolute deviation from the feature mean.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::datasets::DataMatrix;
use crate::error::{Error, Result};

/// Degrees below this are floored before inverse-square-root normalization.
pub const DEGREE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Sample,
    Feature,
}

impl Side {
    pub fn node_count(self, matrix: &DataMatrix) -> usize {
        match self {
            Side::Sample => matrix.n(),
            Side::Feature => matrix.d(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub k: usize,
    pub gamma: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { k: 5, gamma: 8.0 }
    }
}

impl GraphParams {
    pub fn validate(&self, nodes: usize) -> Result<()> {
        if self.k == 0 || self.k >= nodes {
            return Err(Error::InvalidParameter(format!(
                "k must satisfy 1 <= k < {nodes}, got {}",
                self.k
            )));
        }
        validate_gamma(self.gamma)
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    Ok(())
}

/// Square sparse matrix in compressed-row form. Column indices are sorted
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; rows are sorted by column.
    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                debug_assert!(j < dim);
                indices.push(j);
                values.push(w);
            }
            indptr.push(indices.len());
        }
        Self {
            dim,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(dense: ArrayView2<'_, f64>) -> Self {
        let rows = dense
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(j, &w)| (j, w))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, w)| w).sum())
            .collect()
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, w)| w * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `x^T M x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.dim)
            .map(|i| x[i] * self.row(i).map(|(j, w)| w * x[j]).sum::<f64>())
            .sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for (j, w) in self.row(i) {
                out[[i, j]] = w;
            }
        }
        out
    }

    /// `D^{-1/2} M D^{-1/2}` with `degrees` floored at [`DEGREE_FLOOR`].
    pub fn sym_normalized(&self, degrees: &DegreeVector) -> Self {
        let scale = degrees.inv_sqrt();
        let mut out = self.clone();
        for i in 0..self.dim {
            for p in self.indptr[i]..self.indptr[i + 1] {
                // scale_i * scale_j first keeps the result exactly symmetric
                out.values[p] = self.values[p] * (scale[i] * scale[self.indices[p]]);
            }
        }
        out
    }

    fn write_coo(&self, mut w: impl Write) -> std::io::Result<()> {
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }
}

/// Squared Euclidean distances between rows (samples) or columns (features).
pub fn pairwise_sq_dists(matrix: &DataMatrix, side: Side) -> Array2<f64> {
    let points: Array2<f64> = match side {
        Side::Sample => matrix.values().to_owned(),
        Side::Feature => matrix.values().t().as_standard_layout().into_owned(),
    };
    let m = points.nrows();
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let a = points.row(i);
            ((i + 1)..m)
                .map(|j| {
                    a.iter()
                        .zip(points.row(j).iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((m, m));
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Median of `values`; the mean of the middle pair for even counts.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    let len = values.len();
    let mid = len / 2;
    let (lower, upper_mid, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper_mid = *upper_mid;
    if len % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    }
}

/// Median of the strictly-upper-triangle Euclidean distances, taking square
/// roots of the stored squared distances.
pub fn median_bandwidth(sq_dists: ArrayView2<'_, f64>) -> Result<f64> {
    let m = sq_dists.nrows();
    if m < 2 || sq_dists.ncols() != m {
        return Err(Error::Dimension(format!(
            "bandwidth needs a square matrix over at least 2 nodes, got {:?}",
            sq_dists.dim()
        )));
    }
    let mut dists: Vec<f64> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(sq_dists[[i, j]].max(0.0).sqrt());
        }
    }
    let delta = median(&mut dists);
    if delta <= 0.0 {
        return Err(Error::DegenerateData(
            "median pairwise distance is zero; kernel bandwidth undefined".into(),
        ));
    }
    Ok(delta)
}

/// Symmetric kNN affinity over samples or features.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: CsrMatrix,
    bandwidth: f64,
    side: Side,
}

impl SimilarityGraph {
    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn node_count(&self) -> usize {
        self.weights.dim()
    }

    pub fn degrees(&self) -> DegreeVector {
        DegreeVector {
            degrees: self.weights.row_sums(),
            source: DegreeSource::Similarity(self.side),
        }
    }

    /// Writes `row col weight` lines, one per stored entry.
    pub fn write_coo(&self, w: impl Write) -> std::io::Result<()> {
        self.weights.write_coo(w)
    }
}

pub fn knn_gaussian_graph(
    matrix: &DataMatrix,
    side: Side,
    params: &GraphParams,
) -> Result<SimilarityGraph> {
    params.validate(side.node_count(matrix))?;
    let dists = pairwise_sq_dists(matrix, side);
    knn_graph_from_sq_dists(dists.view(), side, params)
}

pub fn knn_graph_from_sq_dists(
    sq_dists: ArrayView2<'_, f64>,
    side: Side,
    params: &GraphParams,
) -> Result<SimilarityGraph> {
    let m = sq_dists.nrows();
    params.validate(m)?;
    let delta = median_bandwidth(sq_dists)?;
    let scale = params.gamma / (delta * delta);

    let neighbors: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            let by_distance = |a: &usize, b: &usize| {
                sq_dists[[i, *a]]
                    .total_cmp(&sq_dists[[i, *b]])
                    .then(a.cmp(b))
            };
            others.select_nth_unstable_by(params.k - 1, by_distance);
            others.truncate(params.k);
            others
        })
        .collect();

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, list) in neighbors.iter().enumerate() {
        for &j in list {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    let rows = adjacency
        .into_iter()
        .enumerate()
        .map(|(i, mut cols)| {
            cols.sort_unstable();
            cols.dedup();
            cols.into_iter()
                .map(|j| (j, (-scale * sq_dists[[i, j]]).exp()))
                .collect()
        })
        .collect();

    Ok(SimilarityGraph {
        weights: CsrMatrix::from_rows(rows),
        bandwidth: delta,
        side,
    })
}

/// Largest per-feature median absolute deviation from the feature mean.
pub fn bipartite_bandwidth(matrix: &DataMatrix) -> Result<f64> {
    let (_, delta) = feature_means_and_bandwidth(matrix);
    if delta <= 0.0 {
        return Err(Error::DegenerateData(
            "every feature has zero median deviation; bipartite bandwidth undefined".into(),
        ));
    }
    Ok(delta)
}

fn feature_means_and_bandwidth(matrix: &DataMatrix) -> (Vec<f64>, f64) {
    let mut means = Vec::with_capacity(matrix.d());
    let mut delta = 0.0f64;
    for col in matrix.view().columns() {
        let mean = col.sum() / col.len() as f64;
        let mut deviations: Vec<f64> = col.iter().map(|x| (x - mean).abs()).collect();
        delta = delta.max(median(&mut deviations));
        means.push(mean);
    }
    (means, delta)
}

/// Dense `n x d` sample-feature affinity. The feature-to-sample block is the
/// transpose of `weights` and is never stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    weights: Array2<f64>,
    bandwidth: f64,
    feature_means: Vec<f64>,
}

impl BipartiteGraph {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d(&self) -> usize {
        self.weights.ncols()
    }

    /// Row sums for [`Side::Sample`], column sums for [`Side::Feature`].
    pub fn degrees(&self, axis: Side) -> DegreeVector {
        let degrees = match axis {
            Side::Sample => self.weights.rows().into_iter().map(|r| r.sum()).collect(),
            Side::Feature => self
                .weights
                .columns()
                .into_iter()
                .map(|c| c.sum())
                .collect(),
        };
        DegreeVector {
            degrees,
            source: DegreeSource::Bipartite(axis),
        }
    }

    /// `D_u^{-1/2} W D_v^{-1/2}` using the bipartite row and column degrees.
    pub fn normalized(&self) -> Array2<f64> {
        let row_scale = self.degrees(Side::Sample).inv_sqrt();
        let col_scale = self.degrees(Side::Feature).inv_sqrt();
        let mut out = self.weights.clone();
        for ((i, j), w) in out.indexed_iter_mut() {
            *w *= row_scale[i] * col_scale[j];
        }
        out
    }

    pub fn write_coo(&self, mut w: impl Write) -> std::io::Result<()> {
        for ((i, j), v) in self.weights.indexed_iter() {
            writeln!(w, "{i} {j} {v}")?;
        }
        Ok(())
    }
}

pub fn bipartite_graph(matrix: &DataMatrix, gamma: f64) -> Result<BipartiteGraph> {
    validate_gamma(gamma)?;
    let delta = bipartite_bandwidth(matrix)?;
    let (means, _) = feature_means_and_bandwidth(matrix);
    let scale = gamma / (delta * delta);
    let mut weights = matrix.values().clone();
    for ((_, j), x) in weights.indexed_iter_mut() {
        let dev = *x - means[j];
        *x = (-scale * dev * dev).exp();
    }
    Ok(BipartiteGraph {
        weights,
        bandwidth: delta,
        feature_means: means,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeSource {
    Similarity(Side),
    Bipartite(Side),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector {
    pub degrees: Vec<f64>,
    pub source: DegreeSource,
}

impl DegreeVector {
    pub fn inv_sqrt(&self) -> Vec<f64> {
        self.degrees
            .iter()
            .map(|&d| 1.0 / d.max(DEGREE_FLOOR).sqrt())
            .collect()
    }
}

/// Anything that has degree vectors along an axis.
pub trait Affinity {
    fn degree_vector(&self, axis: Side) -> DegreeVector;
}

impl Affinity for SimilarityGraph {
    /// The graph is symmetric, so `axis` only labels the result.
    fn degree_vector(&self, _axis: Side) -> DegreeVector {
        self.degrees()
    }
}

impl Affinity for BipartiteGraph {
    fn degree_vector(&self, axis: Side) -> DegreeVector {
        self.degrees(axis)
    }
}

pub fn degree_vector(graph: &impl Affinity, axis: Side) -> DegreeVector {
    graph.degree_vector(axis)
}

/// The normalized affinity blocks shared by every coupling weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBlocks {
    pub s11: CsrMatrix,
    pub s22: CsrMatrix,
    pub s12: Array2<f64>,
}

impl NormalizedBlocks {
    pub fn new(a11: &SimilarityGraph, a22: &SimilarityGraph, a12: &BipartiteGraph) -> Result<Self> {
        let (n, d) = (a11.node_count(), a22.node_count());
        if a12.n() != n || a12.d() != d {
            return Err(Error::Dimension(format!(
                "bipartite graph is {}x{} but sample/feature graphs have {n} and {d} nodes",
                a12.n(),
                a12.d()
            )));
        }
        Ok(Self {
            s11: a11.weights().sym_normalized(&a11.degrees()),
            s22: a22.weights().sym_normalized(&a22.degrees()),
            s12: a12.normalized(),
        })
    }

    pub fn n(&self) -> usize {
        self.s11.dim()
    }

    pub fn d(&self) -> usize {
        self.s22.dim()
    }

    /// `S12 * v`, length n.
    pub fn s12_mul(&self, v: &[f64]) -> Vec<f64> {
        self.s12.dot(&ndarray::ArrayView1::from(v)).to_vec()
    }

    /// `S21 * u = S12^T * u`, length d.
    pub fn s21_mul(&self, u: &[f64]) -> Vec<f64> {
        self.s12.t().dot(&ndarray::ArrayView1::from(u)).to_vec()
    }
}

/// The `(n + d)`-square operator `2I - lambda2 * [[S11, S12], [S21, S22]]`.
#[derive(Debug, Clone)]
pub struct DualLaplacian {
    blocks: Arc<NormalizedBlocks>,
    lambda2: f64,
}

impl DualLaplacian {
    pub fn new(blocks: Arc<NormalizedBlocks>, lambda2: f64) -> Result<Self> {
        if !(lambda2 >= 0.0 && lambda2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda2 must be finite and >= 0, got {lambda2}"
            )));
        }
        Ok(Self { blocks, lambda2 })
    }

    pub fn blocks(&self) -> &NormalizedBlocks {
        &self.blocks
    }

    pub fn shared_blocks(&self) -> Arc<NormalizedBlocks> {
        Arc::clone(&self.blocks)
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn n(&self) -> usize {
        self.blocks.n()
    }

    pub fn d(&self) -> usize {
        self.blocks.d()
    }

    /// `L * x` for `x = [u; v]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n + self.d());
        let (u, v) = x.split_at(n);
        let s11u = self.blocks.s11.mul_vec(u);
        let s12v = self.blocks.s12_mul(v);
        let s21u = self.blocks.s21_mul(u);
        let s22v = self.blocks.s22.mul_vec(v);
        let top = u.iter().zip(s11u.iter().zip(&s12v));
        let bottom = v.iter().zip(s21u.iter().zip(&s22v));
        top.chain(bottom)
            .map(|(xi, (a, b))| 2.0 * xi - self.lambda2 * (a + b))
            .collect()
    }

    /// Dense `(n + d)`-square matrix; only for small instances.
    pub fn to_dense(&self) -> Array2<f64> {
        let (n, d) = (self.n(), self.d());
        let b = &self.blocks;
        let mut out = Array2::<f64>::eye(n + d) * 2.0;
        let s11 = b.s11.to_dense();
        let s22 = b.s22.to_dense();
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] -= self.lambda2 * s11[[i, j]];
            }
            for j in 0..d {
                out[[i, n + j]] -= self.lambda2 * b.s12[[i, j]];
                out[[n + j, i]] -= self.lambda2 * b.s12[[i, j]];
            }
        }
        for i in 0..d {
            for j in 0..d {
                out[[n + i, n + j]] -= self.lambda2 * s22[[i, j]];
            }
        }
        out
    }
}

pub fn dual_laplacian(
    a11: &SimilarityGraph,
    a22: &SimilarityGraph,
    a12: &BipartiteGraph,
    lambda2: f64,
) -> Result<DualLaplacian> {
    DualLaplacian::new(Arc::new(NormalizedBlocks::new(a11, a22, a12)?), lambda2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const E8: f64 = 3.354_626_279_025_119e-4;

    fn matrix(rows: &[Vec<f64>]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    fn graph_from_dense(a: Array2<f64>, side: Side) -> SimilarityGraph {
        SimilarityGraph {
            weights: CsrMatrix::from_dense(a.view()),
            bandwidth: 1.0,
            side,
        }
    }

    #[test]
    fn sample_distances() {
        let m = matrix(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 0.0]]);
        let d = pairwise_sq_dists(&m, Side::Sample);
        assert_eq!(d[[0, 1]], 25.0);
        assert_eq!(d[[1, 0]], 25.0);
        assert_eq!(d[[0, 2]], 0.0);
        assert_eq!(d[[1, 1]], 0.0);
    }

    #[test]
    fn feature_distances() {
        let m = matrix(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        let d = pairwise_sq_dists(&m, Side::Feature);
        assert_eq!(d.dim(), (2, 2));
        assert_eq!(d[[0, 1]], 2.0);
    }

    #[test]
    fn median_odd_and_even() {
        // squared distances 1, 4, 9 -> distances 1, 2, 3
        let odd = array![[0.0, 1.0, 4.0], [1.0, 0.0, 9.0], [4.0, 9.0, 0.0]];
        assert_eq!(median_bandwidth(odd.view()).unwrap(), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [7.0]), 7.0);
    }

    #[test]
    fn coincident_points_have_no_bandwidth() {
        let m = matrix(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let err = knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 1, gamma: 8.0 });
        assert!(matches!(err, Err(Error::DegenerateData(_))));
    }

    #[test]
    fn kernel_at_bandwidth_is_exp_minus_gamma() {
        // Three collinear points at 0, 1, 2: distances {1, 1, 2}, median 1.
        let m = matrix(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
        let g = knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 1, gamma: 8.0 }).unwrap();
        assert_eq!(g.bandwidth(), 1.0);
        assert!((g.weights().get(0, 1) - E8).abs() < 1e-18);
        // 0 and 2 are not neighbors of each other.
        assert_eq!(g.weights().get(0, 2), 0.0);
        assert_eq!(g.weights().get(0, 0), 0.0);
    }

    #[test]
    fn duplicate_neighbors_get_unit_weight() {
        let m = matrix(&[
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![5.0, 5.0],
            vec![6.0, 5.0],
        ]);
        let g = knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 1, gamma: 8.0 }).unwrap();
        assert_eq!(g.weights().get(0, 1), 1.0);
        assert_eq!(g.weights().get(1, 0), 1.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Node 1 is equidistant from 0 and 2.
        let m = matrix(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![10.0, 0.0],
        ]);
        let g = knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 1, gamma: 1.0 }).unwrap();
        let row1: Vec<usize> = g.weights().row(1).map(|(j, _)| j).collect();
        // 1 picks 0; 0 picks 1; 2 picks 1 (union adds 2 to row 1); 3 picks 2.
        assert_eq!(row1, vec![0, 2]);
    }

    #[test]
    fn invalid_k_rejected() {
        let m = matrix(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]]);
        assert!(knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 3, gamma: 8.0 }).is_err());
        assert!(knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 0, gamma: 8.0 }).is_err());
        assert!(knn_gaussian_graph(&m, Side::Sample, &GraphParams { k: 1, gamma: 0.0 }).is_err());
    }

    #[test]
    fn bipartite_three_step_bandwidth() {
        let m = matrix(&[vec![1.0, 0.0], vec![3.0, 0.0]]);
        assert_eq!(bipartite_bandwidth(&m).unwrap(), 1.0);
        // medians 1 and 4 -> 4
        let m = matrix(&[vec![1.0, 0.0], vec![3.0, 8.0]]);
        assert_eq!(bipartite_bandwidth(&m).unwrap(), 4.0);
        let m = matrix(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(matches!(
            bipartite_bandwidth(&m),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn bipartite_weights() {
        // Column 0: values (1, 3), mean 2, deviations 1, delta 1 -> both e^-8.
        // Column 1 is constant at its mean -> weight 1.
        let m = matrix(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        let g = bipartite_graph(&m, 8.0).unwrap();
        assert_eq!(g.bandwidth(), 1.0);
        assert!((g.weights()[[0, 0]] - E8).abs() < 1e-18);
        assert!((g.weights()[[1, 0]] - E8).abs() < 1e-18);
        assert_eq!(g.weights()[[0, 1]], 1.0);
        assert_eq!(g.feature_means(), &[2.0, 5.0]);
    }

    #[test]
    fn degree_sums() {
        let g = graph_from_dense(array![[0.0, 1.0], [1.0, 0.0]], Side::Sample);
        assert_eq!(degree_vector(&g, Side::Sample).degrees, vec![1.0, 1.0]);
        let g = graph_from_dense(
            array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.0], [0.5, 0.0, 0.0]],
            Side::Sample,
        );
        assert_eq!(g.degrees().degrees, vec![1.0, 0.5, 0.5]);

        let b = BipartiteGraph {
            weights: array![[E8], [E8]],
            bandwidth: 1.0,
            feature_means: vec![2.0],
        };
        assert_eq!(degree_vector(&b, Side::Sample).degrees, vec![E8, E8]);
        assert_eq!(degree_vector(&b, Side::Feature).degrees, vec![2.0 * E8]);
    }

    #[test]
    fn normalized_bipartite_toy() {
        let b = BipartiteGraph {
            weights: array![[E8], [E8]],
            bandwidth: 1.0,
            feature_means: vec![2.0],
        };
        let s = b.normalized();
        let expected = 1.0 / 2f64.sqrt();
        assert!((s[[0, 0]] - expected).abs() < 1e-12);
        assert!((s[[1, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn unit_degree_normalization_is_identity() {
        let a = graph_from_dense(array![[0.0, 1.0], [1.0, 0.0]], Side::Sample);
        let s = a.weights().sym_normalized(&a.degrees());
        assert_eq!(s.to_dense(), array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn normalization_is_exactly_symmetric() {
        let w = array![
            [0.0, 0.3, 0.7, 0.1],
            [0.3, 0.0, 0.9, 0.0],
            [0.7, 0.9, 0.0, 0.2],
            [0.1, 0.0, 0.2, 0.0]
        ];
        let a = graph_from_dense(w, Side::Sample);
        let s = a.weights().sym_normalized(&a.degrees()).to_dense();
        assert_eq!(s, s.t());
    }

    #[test]
    fn zero_degree_is_floored_not_nan() {
        let a = graph_from_dense(Array2::zeros((2, 2)), Side::Sample);
        let s = a.weights().sym_normalized(&a.degrees());
        assert!(s.to_dense().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn lambda2_zero_is_twice_identity() {
        let a11 = graph_from_dense(array![[0.0, 1.0], [1.0, 0.0]], Side::Sample);
        let a22 = graph_from_dense(array![[0.0, 0.3], [0.3, 0.0]], Side::Feature);
        let a12 = BipartiteGraph {
            weights: array![[0.5, 1.0], [0.2, 0.7]],
            bandwidth: 1.0,
            feature_means: vec![0.0, 0.0],
        };
        let l = dual_laplacian(&a11, &a22, &a12, 0.0).unwrap();
        let x = [0.3, -1.0, 2.5, 7.0];
        let y = l.apply(&x);
        for (a, b) in x.iter().zip(&y) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!(dual_laplacian(&a11, &a22, &a12, -1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a11 = graph_from_dense(array![[0.0, 1.0], [1.0, 0.0]], Side::Sample);
        let a22 = graph_from_dense(array![[0.0, 1.0], [1.0, 0.0]], Side::Feature);
        let a12 = BipartiteGraph {
            weights: array![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]],
            bandwidth: 1.0,
            feature_means: vec![0.0; 3],
        };
        assert!(matches!(
            dual_laplacian(&a11, &a22, &a12, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn coo_dump() {
        let g = graph_from_dense(array![[0.0, 0.5], [0.5, 0.0]], Side::Sample);
        let mut buf = Vec::new();
        g.write_coo(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1 0.5\n1 0 0.5\n");
    }
}
