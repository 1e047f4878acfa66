//! Quadratic programs over the probability simplex:
//!
//! ```text
//!     minimize    z'Az + b'z
//!     subject to  sum(z) = 1, z >= 0
//! ```
//!
//! solved by projected gradient with a fixed step `1 / (2 |A|_2)`, where the
//! spectral norm is estimated once per operator by power iteration. The
//! quadratic term is applied matrix-free, so the re-ranking subproblems never
//! materialize anything denser than the stored affinity.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::graphs::CsrMatrix;
use crate::linalg::{self, max_abs_diff};

/// Symmetric linear operator used as the quadratic term.
pub trait QuadOperator: Sync {
    fn dim(&self) -> usize;

    /// `out = A x`
    fn apply_into(&self, x: &[f64], out: &mut [f64]);
}

/// Explicit dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseQuad(pub Array2<f64>);

impl QuadOperator for DenseQuad {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let y = self.0.dot(&ArrayView1::from(x));
        out.copy_from_slice(y.as_slice().expect("contiguous"));
    }
}

/// `alpha * I - coupling * S` for a sparse symmetric affinity `S`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedAffinity<'a> {
    pub alpha: f64,
    pub coupling: f64,
    pub affinity: &'a CsrMatrix,
}

impl QuadOperator for ShiftedAffinity<'_> {
    fn dim(&self) -> usize {
        self.affinity.dim()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        if self.coupling == 0.0 {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = self.alpha * xi;
            }
            return;
        }
        self.affinity.mul_vec_into(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.alpha * xi - self.coupling * *o;
        }
    }
}

/// `alpha * I`
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity {
    pub alpha: f64,
    pub dim: usize,
}

impl QuadOperator for ScaledIdentity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.alpha * xi;
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSubproblem<Op> {
    pub quad: Op,
    pub linear: Vec<f64>,
}

impl<Op: QuadOperator> QpSubproblem<Op> {
    pub fn new(quad: Op, linear: Vec<f64>) -> Result<Self> {
        if quad.dim() == 0 {
            return Err(Error::Dimension("QP dimension must be at least 1".into()));
        }
        if linear.len() != quad.dim() {
            return Err(Error::LengthMismatch {
                what: "QP linear term",
                expected: quad.dim(),
                actual: linear.len(),
            });
        }
        Ok(Self { quad, linear })
    }

    pub fn dim(&self) -> usize {
        self.quad.dim()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        objective(&self.quad, &self.linear, z)
    }
}

pub fn objective(quad: &impl QuadOperator, linear: &[f64], z: &[f64]) -> f64 {
    let mut az = vec![0.0; z.len()];
    quad.apply_into(z, &mut az);
    linalg::dot(z, &az) + linalg::dot(linear, z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Keep the objective value after every iteration in the report.
    pub record_objectives: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            record_objectives: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    /// Final iterate; on the simplex to rounding error.
    pub solution: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// `max |z - P(z - grad)|` at the returned point; zero exactly at a KKT point.
    pub final_gradient_residual: f64,
    pub converged: bool,
    /// The smallest-eigenvalue estimate of the quadratic term was negative.
    pub indefinite: bool,
    pub objectives: Vec<f64>,
}

/// Euclidean projection onto `{z : z >= 0, sum(z) = 1}` by the sort-and-threshold
/// rule.
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    project_simplex_into(y, &mut out, &mut Vec::with_capacity(y.len()));
    out
}

fn project_simplex_into(y: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(y);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (idx, &v) in scratch.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - 1.0) / (idx + 1) as f64;
        if v - t > 0.0 {
            threshold = t;
        }
    }
    for (o, v) in out.iter_mut().zip(y) {
        *o = (v - threshold).max(0.0);
    }
}

/// Spectral facts about a quadratic term, computed once and reused across
/// solves that share it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorSpectrum {
    pub norm: f64,
    pub min_eigenvalue: f64,
}

impl OperatorSpectrum {
    pub const NORM_FLOOR: f64 = 1e-12;

    pub fn estimate(op: &impl QuadOperator) -> Self {
        let apply = |x: &[f64], out: &mut [f64]| op.apply_into(x, out);
        let norm = linalg::spectral_norm(op.dim(), apply);
        let min_eigenvalue = linalg::smallest_eigenvalue(op.dim(), norm, apply);
        Self {
            norm: norm.max(Self::NORM_FLOOR),
            min_eigenvalue,
        }
    }

    pub fn step(&self) -> f64 {
        0.5 / self.norm
    }

    pub fn is_indefinite(&self) -> bool {
        // relative slack for the power-iteration error near zero
        self.min_eigenvalue < -1e-10 * self.norm
    }
}

/// A quadratic term with its step size fixed, ready to solve against many
/// linear terms.
pub struct PreparedQp<'a, Op> {
    quad: &'a Op,
    spectrum: OperatorSpectrum,
}

impl<'a, Op: QuadOperator> PreparedQp<'a, Op> {
    pub fn new(quad: &'a Op) -> Self {
        Self {
            quad,
            spectrum: OperatorSpectrum::estimate(quad),
        }
    }

    pub fn with_spectrum(quad: &'a Op, spectrum: OperatorSpectrum) -> Self {
        Self { quad, spectrum }
    }

    pub fn spectrum(&self) -> OperatorSpectrum {
        self.spectrum
    }

    pub fn solve(
        &self,
        linear: &[f64],
        start: &[f64],
        opts: &SolverOptions,
    ) -> Result<SolverReport> {
        let dim = self.quad.dim();
        if linear.len() != dim || start.len() != dim {
            return Err(Error::LengthMismatch {
                what: "QP vectors vs operator",
                expected: dim,
                actual: if linear.len() != dim {
                    linear.len()
                } else {
                    start.len()
                },
            });
        }
        if opts.tol.is_nan() || opts.tol <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance must be positive, got {}",
                opts.tol
            )));
        }
        let start_sum: f64 = start.iter().sum();
        if start.iter().any(|v| v.is_nan() || *v < 0.0) || (start_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "solver start point is not on the simplex".into(),
            ));
        }

        let step = self.spectrum.step();
        let mut z = start.to_vec();
        let mut grad = vec![0.0; dim];
        let mut trial = vec![0.0; dim];
        let mut scratch = Vec::with_capacity(dim);
        let mut objectives = Vec::new();

        // grad = 2Az + b, objective = z'Az + b'z = (z'(grad + b)) / 2
        let eval = |z: &[f64], grad: &mut [f64]| -> f64 {
            self.quad.apply_into(z, grad);
            for (g, b) in grad.iter_mut().zip(linear) {
                *g = 2.0 * *g + b;
            }
            0.5 * z
                .iter()
                .zip(grad.iter().zip(linear))
                .map(|(zi, (g, b))| zi * (g + b))
                .sum::<f64>()
        };

        let mut value = eval(&z, &mut grad);
        if !value.is_finite() {
            return Err(Error::Numerical {
                message: "non-finite objective at start point".into(),
                iterations: 0,
                last_objective: value,
            });
        }
        if opts.record_objectives {
            objectives.push(value);
        }

        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iters {
            iterations += 1;
            for ((t, zi), g) in trial.iter_mut().zip(&z).zip(&grad) {
                *t = zi - step * g;
            }
            let mut next = vec![0.0; dim];
            project_simplex_into(&trial, &mut next, &mut scratch);
            let moved = max_abs_diff(&next, &z);
            z = next;
            let previous = value;
            value = eval(&z, &mut grad);
            if !value.is_finite() {
                return Err(Error::Numerical {
                    message: format!("objective became non-finite (previous value {previous})"),
                    iterations,
                    last_objective: value,
                });
            }
            if opts.record_objectives {
                objectives.push(value);
            }
            if moved <= opts.tol {
                converged = true;
                break;
            }
        }

        for ((t, zi), g) in trial.iter_mut().zip(&z).zip(&grad) {
            *t = zi - g;
        }
        let mut mapped = vec![0.0; dim];
        project_simplex_into(&trial, &mut mapped, &mut scratch);
        let residual = max_abs_diff(&mapped, &z);

        Ok(SolverReport {
            solution: z,
            objective: value,
            iterations,
            final_gradient_residual: residual,
            converged,
            indefinite: self.spectrum.is_indefinite(),
            objectives,
        })
    }
}

pub fn solve_simplex_qp<Op: QuadOperator>(
    problem: &QpSubproblem<Op>,
    start: &[f64],
    opts: &SolverOptions,
) -> Result<SolverReport> {
    PreparedQp::new(&problem.quad).solve(&problem.linear, start, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.6, 0.4, 0.4]);
        assert!(close(&p, &[0.4667, 0.2667, 0.2667], 1e-4), "{p:?}");
        assert!(close(&p, &[7.0 / 15.0, 4.0 / 15.0, 4.0 / 15.0], 1e-15));
    }

    #[test]
    fn projection_of_far_negative_point() {
        let p = project_simplex(&[-10.0, -11.0, -30.0]);
        assert!(close(&p, &[1.0, 0.0, 0.0], 0.0), "{p:?}");
    }

    #[test]
    fn identity_quad_gives_uniform() {
        let qp = QpSubproblem::new(DenseQuad(Array2::eye(3)), vec![0.0; 3]).unwrap();
        let r = solve_simplex_qp(&qp, &[1.0, 0.0, 0.0], &SolverOptions::default()).unwrap();
        assert!(r.converged);
        assert!(
            close(&r.solution, &[1.0 / 3.0; 3], 1e-8),
            "{:?}",
            r.solution
        );
        assert!(!r.indefinite);
    }

    #[test]
    fn linear_pull_to_vertex() {
        let qp = QpSubproblem::new(DenseQuad(Array2::eye(3)), vec![-2.0, 0.0, 0.0]).unwrap();
        let r = solve_simplex_qp(&qp, &[1.0 / 3.0; 3], &SolverOptions::default()).unwrap();
        assert!(
            close(&r.solution, &[1.0, 0.0, 0.0], 1e-8),
            "{:?}",
            r.solution
        );
        assert!(r.final_gradient_residual < 1e-8);
    }

    #[test]
    fn indefinite_quad_is_flagged_and_still_solved() {
        let a = array![[1.0, 0.0], [0.0, -1.0]];
        let qp = QpSubproblem::new(DenseQuad(a), vec![0.0, 0.0]).unwrap();
        let r = solve_simplex_qp(&qp, &[0.5, 0.5], &SolverOptions::default()).unwrap();
        assert!(r.indefinite);
        assert!(close(&r.solution, &[0.0, 1.0], 1e-8), "{:?}", r.solution);
    }

    #[test]
    fn shifted_affinity_matches_dense() {
        let s =
            CsrMatrix::from_dense(array![[0.0, 0.5, 0.0], [0.5, 0.0, 0.2], [0.0, 0.2, 0.0]].view());
        let op = ShiftedAffinity {
            alpha: 3.0,
            coupling: 2.0,
            affinity: &s,
        };
        let dense = DenseQuad(array![
            [3.0, -1.0, 0.0],
            [-1.0, 3.0, -0.4],
            [0.0, -0.4, 3.0]
        ]);
        let x = [0.2, -1.0, 4.0];
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        op.apply_into(&x, &mut a);
        dense.apply_into(&x, &mut b);
        assert!(close(&a, &b, 1e-15));
    }

    #[test]
    fn records_nonincreasing_objective_for_psd() {
        let a = array![[2.0, 0.5, 0.1], [0.5, 1.0, 0.3], [0.1, 0.3, 0.5]];
        let qp = QpSubproblem::new(DenseQuad(a), vec![0.3, -0.2, 0.1]).unwrap();
        let opts = SolverOptions {
            record_objectives: true,
            ..Default::default()
        };
        let r = solve_simplex_qp(&qp, &[1.0, 0.0, 0.0], &opts).unwrap();
        assert!(r.objectives.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert_eq!(r.objectives.len(), r.iterations + 1);
    }

    #[test]
    fn non_convergence_returns_last_iterate() {
        let a = array![[1.0, 0.0], [0.0, 1e-3]];
        let qp = QpSubproblem::new(DenseQuad(a), vec![0.0, 0.0]).unwrap();
        let opts = SolverOptions {
            tol: 1e-14,
            max_iters: 3,
            record_objectives: false,
        };
        let r = solve_simplex_qp(&qp, &[1.0, 0.0], &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!((r.solution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_objective_is_error() {
        let qp = QpSubproblem::new(DenseQuad(Array2::eye(2)), vec![f64::NAN, 0.0]).unwrap();
        let err = solve_simplex_qp(&qp, &[0.5, 0.5], &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(QpSubproblem::new(DenseQuad(Array2::eye(2)), vec![0.0; 3]).is_err());
        let qp = QpSubproblem::new(DenseQuad(Array2::eye(2)), vec![0.0; 2]).unwrap();
        assert!(solve_simplex_qp(&qp, &[0.7, 0.7], &SolverOptions::default()).is_err());
        let bad_tol = SolverOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(solve_simplex_qp(&qp, &[0.5, 0.5], &bad_tol).is_err());
    }
}
