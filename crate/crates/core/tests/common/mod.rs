//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use dmrr_core::datasets::{DataMatrix, LabelVector};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two balanced clusters. Informative columns sit at +-1 by cluster with
/// small jitter; every other column is wide, structureless noise.
pub fn planted_fixture(
    n: usize,
    d: usize,
    informative: &[usize],
    noise_scale: f64,
    seed: u64,
) -> (DataMatrix, LabelVector) {
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut values = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            values[[i, j]] = if informative.contains(&j) {
                let centre = if labels[i] == 0 { -1.0 } else { 1.0 };
                centre + 0.1 * normal(&mut r)
            } else {
                noise_scale * normal(&mut r)
            };
        }
    }
    (
        DataMatrix::new(values).unwrap(),
        LabelVector::from_ids(&labels).unwrap(),
    )
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DataMatrix {
    DataMatrix::new(Array2::from_shape_fn((n, d), |_| normal(rng))).unwrap()
}

/// Random symmetric positive semidefinite matrix `M'M / dim`, optionally
/// rank-deficient.
pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(rank, dim, |_, _| normal(rng));
    (m.transpose() * m) / dim as f64
}

fn qp_value(a: &DMatrix<f64>, b: &DVector<f64>, z: &DVector<f64>) -> f64 {
    (z.transpose() * a * z)[(0, 0)] + b.dot(z)
}

/// Exhaustive active-set oracle for `min z'Az + b'z` on the simplex: for
/// every nonempty support solve the equality-constrained KKT system
/// `[2A_S 1; 1' 0] [z; -mu] = [-b_S; 1]` and keep the best feasible point.
pub fn active_set_oracle(a: &DMatrix<f64>, b: &[f64]) -> (f64, Vec<f64>) {
    let dim = b.len();
    let bv = DVector::from_column_slice(b);
    let mut best = (f64::INFINITY, vec![0.0; dim]);
    for mask in 1u32..(1 << dim) {
        let support: Vec<usize> = (0..dim).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (p, &i) in support.iter().enumerate() {
            for (q, &j) in support.iter().enumerate() {
                kkt[(p, q)] = 2.0 * a[(i, j)];
            }
            kkt[(p, k)] = 1.0;
            kkt[(k, p)] = 1.0;
            rhs[p] = -b[i];
        }
        rhs[k] = 1.0;
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        if support.iter().enumerate().any(|(p, _)| sol[p] < -1e-12) {
            continue;
        }
        let mut z = DVector::zeros(dim);
        for (p, &i) in support.iter().enumerate() {
            z[i] = sol[p].max(0.0);
        }
        let value = qp_value(a, &bv, &z);
        if value < best.0 {
            best = (value, z.iter().copied().collect());
        }
    }
    best
}

pub fn dense(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Largest eigenvalue magnitude via a full symmetric eigendecomposition.
pub fn spectral_radius(a: &Array2<f64>) -> f64 {
    to_nalgebra(a)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn smallest_eigenvalue(a: &Array2<f64>) -> f64 {
    to_nalgebra(a)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Accuracy maximized over every injective mapping of clusters to classes
/// (clusters beyond the class count stay unmapped).
pub fn brute_force_acc(pred: &[usize], truth: &[usize]) -> f64 {
    let dense = |xs: &[usize]| {
        let mut seen: Vec<usize> = Vec::new();
        let ids: Vec<usize> = xs
            .iter()
            .map(|x| match seen.iter().position(|s| s == x) {
                Some(p) => p,
                None => {
                    seen.push(*x);
                    seen.len() - 1
                }
            })
            .collect();
        (ids, seen.len())
    };
    let (p, np) = dense(pred);
    let (t, nt) = dense(truth);
    let slots = np.max(nt);
    // permutations of 0..slots; cluster i maps to perm[i], matches count when < nt
    let mut perm: Vec<usize> = (0..slots).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |perm| {
        let hits = p.iter().zip(&t).filter(|(a, b)| perm[**a] == **b).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

fn permute(xs: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == xs.len() {
        visit(xs);
        return;
    }
    for i in k..xs.len() {
        xs.swap(k, i);
        permute(xs, k + 1, visit);
        xs.swap(k, i);
    }
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}
