//! Manifold re-ranking of sample and feature scores.
//!
//! The joint model minimizes, over `u` and `v` on their simplexes,
//!
//! ```text
//!     F(u, v) = [u; v]' L [u; v] + lambda1 * (|u - u0|^2 + |v - v0|^2)
//!     L       = 2I - lambda2 * [[S11, S12], [S21, S22]]
//! ```
//!
//! by alternating exact block minimizations: `u` with `v` fixed, then `v`
//! with the fresh `u`. Each block is a simplex QP with quadratic term
//! `(2 + lambda1) I - lambda2 S` and linear term
//! `-2 lambda2 (cross block) - 2 lambda1 prior`. The loop stops once the
//! relative change of `F` between sweeps drops below `tol`.
//!
//! The sample-only, feature-only, and bipartite-only objectives are kept as
//! ablations.

use crate::error::{Error, Result};
use crate::graphs::{BipartiteGraph, CsrMatrix, DualLaplacian, Side, SimilarityGraph};
use crate::init_scores::ScoreVector;
use crate::linalg::{dot, sq_dist};
use crate::simplex_qp::{
    OperatorSpectrum, PreparedQp, ScaledIdentity, ShiftedAffinity, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tol: f64,
    pub max_outer_iters: usize,
    pub inner: SolverOptions,
}

impl RerankParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            tol: 1e-6,
            max_outer_iters: 300,
            inner: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda1 must be positive, got {}",
                self.lambda1
            )));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda2 must be >= 0, got {}",
                self.lambda2
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 || self.max_outer_iters == 0 {
            return Err(Error::InvalidParameter(
                "outer tolerance must be positive and max_outer_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Objective value after initialization (index 0) and after each sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectiveTrace {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Some block subproblem had an indefinite quadratic term.
    pub indefinite: bool,
}

impl ObjectiveTrace {
    fn relative_change(&self) -> Option<f64> {
        let [.., prev, last] = self.values.as_slice() else {
            return None;
        };
        let diff = (last - prev).abs();
        Some(if *prev == 0.0 {
            diff
        } else {
            diff / prev.abs()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// All features by descending score, ties to the lower index.
    pub feature_order: Vec<usize>,
    /// The first `m` entries of `feature_order`.
    pub chosen: Vec<usize>,
    pub scores: ScoreVector,
    pub sample_scores: Option<ScoreVector>,
}

impl SelectionResult {
    pub fn with_m(mut self, m: usize) -> Result<Self> {
        check_m(m, self.feature_order.len())?;
        self.chosen = self.feature_order[..m].to_vec();
        Ok(self)
    }

    pub fn top(&self, m: usize) -> Result<&[usize]> {
        check_m(m, self.feature_order.len())?;
        Ok(&self.feature_order[..m])
    }
}

fn check_m(m: usize, d: usize) -> Result<()> {
    if m == 0 || m > d {
        return Err(Error::InvalidParameter(format!(
            "number of selected features must be in 1..={d}, got {m}"
        )));
    }
    Ok(())
}

/// Indices sorted by descending value, stable on ties.
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

pub fn select_top_features(v: &ScoreVector, m: usize) -> Result<SelectionResult> {
    check_m(m, v.len())?;
    let feature_order = descending_order(v.values());
    Ok(SelectionResult {
        chosen: feature_order[..m].to_vec(),
        feature_order,
        scores: v.clone(),
        sample_scores: None,
    })
}

fn expect_side(score: &ScoreVector, len: usize, what: &'static str) -> Result<()> {
    if score.len() != len {
        return Err(Error::LengthMismatch {
            what,
            expected: len,
            actual: score.len(),
        });
    }
    Ok(())
}

fn fit_linear(prior: &[f64], lambda1: f64, cross: Option<(&[f64], f64)>) -> Vec<f64> {
    match cross {
        Some((c, weight)) => prior
            .iter()
            .zip(c)
            .map(|(p, x)| -2.0 * weight * x - 2.0 * lambda1 * p)
            .collect(),
        None => prior.iter().map(|p| -2.0 * lambda1 * p).collect(),
    }
}

fn single_graph_rerank(
    graph: &SimilarityGraph,
    prior: &ScoreVector,
    lambda1: f64,
    opts: &SolverOptions,
    side: Side,
) -> Result<ScoreVector> {
    if lambda1.is_nan() || lambda1 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda1}"
        )));
    }
    expect_side(prior, graph.node_count(), "prior vs graph nodes")?;
    let s = graph.weights().sym_normalized(&graph.degrees());
    // (I - S) + lambda1 I
    let quad = ShiftedAffinity {
        alpha: 1.0 + lambda1,
        coupling: 1.0,
        affinity: &s,
    };
    let linear = fit_linear(prior.values(), lambda1, None);
    let start = ScoreVector::uniform(prior.len(), side);
    let report = PreparedQp::new(&quad).solve(&linear, start.values(), opts)?;
    Ok(ScoreVector::normalized_or_uniform(report.solution, side))
}

/// Sample-side re-ranking: `min u'(I - S11)u + lambda1 |u - u0|^2`.
pub fn smrr(
    sample_graph: &SimilarityGraph,
    u0: &ScoreVector,
    lambda1: f64,
    opts: &SolverOptions,
) -> Result<ScoreVector> {
    single_graph_rerank(sample_graph, u0, lambda1, opts, Side::Sample)
}

/// Feature-side re-ranking: `min v'(I - S22)v + lambda1 |v - v0|^2`.
pub fn fmrr(
    feature_graph: &SimilarityGraph,
    v0: &ScoreVector,
    lambda1: f64,
    opts: &SolverOptions,
) -> Result<ScoreVector> {
    single_graph_rerank(feature_graph, v0, lambda1, opts, Side::Feature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub u: ScoreVector,
    pub v: ScoreVector,
    pub trace: ObjectiveTrace,
}

/// Bipartite objective `u'u - 2u'S12 v + v'v + lambda1(|u-u0|^2 + |v-v0|^2)`.
pub fn sfmrr_objective(
    s12: &ndarray::Array2<f64>,
    u: &[f64],
    v: &[f64],
    u0: &[f64],
    v0: &[f64],
    lambda1: f64,
) -> f64 {
    let s12v = s12.dot(&ndarray::ArrayView1::from(v));
    dot(u, u) - 2.0 * dot(u, s12v.as_slice().unwrap())
        + dot(v, v)
        + lambda1 * (sq_dist(u, u0) + sq_dist(v, v0))
}

/// Bipartite-only re-ranking by alternating block minimization with the
/// same relative-change stopping rule as [`dmrr`].
pub fn sfmrr(
    bipartite: &BipartiteGraph,
    u0: &ScoreVector,
    v0: &ScoreVector,
    lambda1: f64,
    tol: f64,
    max_outer_iters: usize,
    inner: &SolverOptions,
) -> Result<PairOutcome> {
    RerankParams {
        lambda1,
        lambda2: 0.0,
        tol,
        max_outer_iters,
        inner: *inner,
    }
    .validate()?;
    let (n, d) = (bipartite.n(), bipartite.d());
    expect_side(u0, n, "u0 vs samples")?;
    expect_side(v0, d, "v0 vs features")?;
    let s12 = bipartite.normalized();
    let (u0v, v0v) = (u0.values(), v0.values());

    let quad_u = ScaledIdentity {
        alpha: 1.0 + lambda1,
        dim: n,
    };
    let quad_v = ScaledIdentity {
        alpha: 1.0 + lambda1,
        dim: d,
    };
    let solver_u = PreparedQp::with_spectrum(
        &quad_u,
        OperatorSpectrum {
            norm: quad_u.alpha,
            min_eigenvalue: quad_u.alpha,
        },
    );
    let solver_v = PreparedQp::with_spectrum(
        &quad_v,
        OperatorSpectrum {
            norm: quad_v.alpha,
            min_eigenvalue: quad_v.alpha,
        },
    );

    let mut u = vec![1.0 / n as f64; n];
    let mut v = vec![1.0 / d as f64; d];
    let objective = |u: &[f64], v: &[f64]| sfmrr_objective(&s12, u, v, u0v, v0v, lambda1);
    let mut trace = ObjectiveTrace {
        values: vec![objective(&u, &v)],
        ..Default::default()
    };
    let mut best = (trace.values[0], u.clone(), v.clone());

    for sweep in 1..=max_outer_iters {
        let s12v = s12.dot(&ndarray::ArrayView1::from(&v[..])).to_vec();
        let lin_u = fit_linear(u0v, lambda1, Some((&s12v, 1.0)));
        u = solver_u
            .solve(&lin_u, &u, inner)
            .map_err(|e| rerank_error(&trace, e))?
            .solution;
        let s21u = s12.t().dot(&ndarray::ArrayView1::from(&u[..])).to_vec();
        let lin_v = fit_linear(v0v, lambda1, Some((&s21u, 1.0)));
        v = solver_v
            .solve(&lin_v, &v, inner)
            .map_err(|e| rerank_error(&trace, e))?
            .solution;

        let value = objective(&u, &v);
        trace.values.push(value);
        trace.iterations = sweep;
        if value < best.0 {
            best = (value, u.clone(), v.clone());
        }
        if trace.relative_change().is_some_and(|r| r < tol) {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        (_, u, v) = best;
    }
    Ok(PairOutcome {
        u: ScoreVector::normalized_or_uniform(u, Side::Sample),
        v: ScoreVector::normalized_or_uniform(v, Side::Feature),
        trace,
    })
}

fn rerank_error(trace: &ObjectiveTrace, source: Error) -> Error {
    Error::Rerank {
        trace: trace.values.clone(),
        source: Box::new(source),
    }
}

/// `F(u, v)` of the joint model, expanded block-wise.
pub fn objective_value(
    laplacian: &DualLaplacian,
    u: &[f64],
    v: &[f64],
    u0: &[f64],
    v0: &[f64],
    lambda1: f64,
) -> f64 {
    let b = laplacian.blocks();
    let lambda2 = laplacian.lambda2();
    let s12v = b.s12_mul(v);
    let coupling = if lambda2 == 0.0 {
        0.0
    } else {
        b.s11.quad_form(u) + 2.0 * dot(u, &s12v) + b.s22.quad_form(v)
    };
    2.0 * (dot(u, u) + dot(v, v)) - lambda2 * coupling + lambda1 * (sq_dist(u, u0) + sq_dist(v, v0))
}

/// Block subproblem operators for one coupling weight, with their spectra
/// estimated once.
struct BlockSolvers<'a> {
    quad_u: ShiftedAffinity<'a>,
    quad_v: ShiftedAffinity<'a>,
    spectrum_u: OperatorSpectrum,
    spectrum_v: OperatorSpectrum,
}

impl<'a> BlockSolvers<'a> {
    fn new(s11: &'a CsrMatrix, s22: &'a CsrMatrix, lambda1: f64, lambda2: f64) -> Self {
        let alpha = 2.0 + lambda1;
        let quad_u = ShiftedAffinity {
            alpha,
            coupling: lambda2,
            affinity: s11,
        };
        let quad_v = ShiftedAffinity {
            alpha,
            coupling: lambda2,
            affinity: s22,
        };
        let spectrum = |q: &ShiftedAffinity| {
            if lambda2 == 0.0 {
                OperatorSpectrum {
                    norm: alpha,
                    min_eigenvalue: alpha,
                }
            } else {
                OperatorSpectrum::estimate(q)
            }
        };
        Self {
            spectrum_u: spectrum(&quad_u),
            spectrum_v: spectrum(&quad_v),
            quad_u,
            quad_v,
        }
    }

    fn indefinite(&self) -> bool {
        self.spectrum_u.is_indefinite() || self.spectrum_v.is_indefinite()
    }
}

/// Whether both block subproblems of [`dmrr`] are positive semidefinite at
/// these weights, according to the power-iteration estimate.
pub fn blocks_are_psd(laplacian: &DualLaplacian, lambda1: f64) -> bool {
    let b = laplacian.blocks();
    !BlockSolvers::new(&b.s11, &b.s22, lambda1, laplacian.lambda2()).indefinite()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmrrOutcome {
    pub selection: SelectionResult,
    pub trace: ObjectiveTrace,
}

/// Joint sample/feature re-ranking by alternating minimization.
///
/// `u` and `v` start uniform. If the loop hits `max_outer_iters` without
/// meeting the tolerance, the iterate with the lowest objective is returned
/// and `trace.converged` is false.
pub fn dmrr(
    laplacian: &DualLaplacian,
    u0: &ScoreVector,
    v0: &ScoreVector,
    params: &RerankParams,
) -> Result<DmrrOutcome> {
    dmrr_with_observer(laplacian, u0, v0, params, |_, _| {})
}

/// [`dmrr`] that reports `(u, v)` to `observe` after every sweep.
pub fn dmrr_with_observer(
    laplacian: &DualLaplacian,
    u0: &ScoreVector,
    v0: &ScoreVector,
    params: &RerankParams,
    mut observe: impl FnMut(&[f64], &[f64]),
) -> Result<DmrrOutcome> {
    params.validate()?;
    if (params.lambda2 - laplacian.lambda2()).abs() > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda2 {} does not match the Laplacian's coupling {}",
            params.lambda2,
            laplacian.lambda2()
        )));
    }
    let (n, d) = (laplacian.n(), laplacian.d());
    expect_side(u0, n, "u0 vs samples")?;
    expect_side(v0, d, "v0 vs features")?;
    let (lambda1, lambda2) = (params.lambda1, params.lambda2);
    let blocks = laplacian.blocks();
    let solvers = BlockSolvers::new(&blocks.s11, &blocks.s22, lambda1, lambda2);
    let solve_u = PreparedQp::with_spectrum(&solvers.quad_u, solvers.spectrum_u);
    let solve_v = PreparedQp::with_spectrum(&solvers.quad_v, solvers.spectrum_v);
    let (u0v, v0v) = (u0.values(), v0.values());

    let mut u = vec![1.0 / n as f64; n];
    let mut v = vec![1.0 / d as f64; d];
    let objective = |u: &[f64], v: &[f64]| objective_value(laplacian, u, v, u0v, v0v, lambda1);
    let mut trace = ObjectiveTrace {
        values: vec![objective(&u, &v)],
        indefinite: solvers.indefinite(),
        ..Default::default()
    };
    let mut best = (trace.values[0], u.clone(), v.clone());

    for sweep in 1..=params.max_outer_iters {
        let cross_u = if lambda2 == 0.0 {
            vec![0.0; n]
        } else {
            blocks.s12_mul(&v)
        };
        let lin_u = fit_linear(u0v, lambda1, Some((&cross_u, lambda2)));
        u = solve_u
            .solve(&lin_u, &u, &params.inner)
            .map_err(|e| rerank_error(&trace, e))?
            .solution;

        let cross_v = if lambda2 == 0.0 {
            vec![0.0; d]
        } else {
            blocks.s21_mul(&u)
        };
        let lin_v = fit_linear(v0v, lambda1, Some((&cross_v, lambda2)));
        v = solve_v
            .solve(&lin_v, &v, &params.inner)
            .map_err(|e| rerank_error(&trace, e))?
            .solution;

        let value = objective(&u, &v);
        if !value.is_finite() {
            return Err(rerank_error(
                &trace,
                Error::Numerical {
                    message: "non-finite joint objective".into(),
                    iterations: sweep,
                    last_objective: value,
                },
            ));
        }
        observe(&u, &v);
        trace.values.push(value);
        trace.iterations = sweep;
        if value < best.0 {
            best = (value, u.clone(), v.clone());
        }
        if trace.relative_change().is_some_and(|r| r < params.tol) {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        (_, u, v) = best;
    }

    let v = ScoreVector::normalized_or_uniform(v, Side::Feature);
    let u = ScoreVector::normalized_or_uniform(u, Side::Sample);
    let feature_order = descending_order(v.values());
    Ok(DmrrOutcome {
        selection: SelectionResult {
            chosen: feature_order.clone(),
            feature_order,
            scores: v,
            sample_scores: Some(u),
        },
        trace,
    })
}
