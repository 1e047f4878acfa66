//! Initial sample and feature scores.
//!
//! Every score vector handed to the re-ranking stage lives on the
//! probability simplex. External feature scorers disagree on orientation,
//! so raw scores always carry an explicit [`Orientation`].

use std::fs;
use std::path::Path;

use crate::datasets::DataMatrix;
use crate::error::{Error, Result};
use crate::graphs::{Side, SimilarityGraph};

/// Maximum allowed deviation of a score vector's sum from 1.
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;

/// A nonnegative vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    values: Vec<f64>,
    side: Side,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, side: Side) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("empty score vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "score entries must be finite and nonnegative, found {v}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "score vector sums to {sum}, expected 1"
            )));
        }
        Ok(Self { values, side })
    }

    pub fn uniform(len: usize, side: Side) -> Self {
        Self {
            values: vec![1.0 / len as f64; len],
            side,
        }
    }

    /// Scales a nonnegative vector onto the simplex, or uniform if it sums to 0.
    pub(crate) fn normalized_or_uniform(values: Vec<f64>, side: Side) -> Self {
        let sum: f64 = values.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            Self {
                values: values.into_iter().map(|v| v / sum).collect(),
                side,
            }
        } else {
            Self::uniform(values.len(), side)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawScores {
    pub values: Vec<f64>,
    pub orientation: Orientation,
}

impl RawScores {
    pub fn new(values: Vec<f64>, orientation: Orientation) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite raw score {v}")));
        }
        Ok(Self {
            values,
            orientation,
        })
    }

    /// Scores flipped so that larger always means better.
    pub fn oriented(&self) -> Vec<f64> {
        match self.orientation {
            Orientation::HigherIsBetter => self.values.clone(),
            Orientation::LowerIsBetter => self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Sample prior: shift each feature to start at zero, sum each row, divide
/// by the largest row sum, map `s -> s(1 - s)`, then normalize to the
/// simplex. Falls back to uniform whenever a step degenerates to all zeros.
pub fn initial_sample_scores(matrix: &DataMatrix) -> ScoreVector {
    let x = matrix.view();
    let mins: Vec<f64> = x
        .columns()
        .into_iter()
        .map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b)))
        .collect();
    let sums: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(&mins).map(|(v, m)| v - m).sum())
        .collect();
    let max = sums.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return ScoreVector::uniform(matrix.n(), Side::Sample);
    }
    let bell = sums
        .iter()
        .map(|s| {
            let s = s / max;
            s * (1.0 - s)
        })
        .collect();
    ScoreVector::normalized_or_uniform(bell, Side::Sample)
}

/// Laplacian Score of each feature against the sample graph; lower is better.
///
/// With `D` the degree matrix, `L = D - W`, and `f` centered by its
/// degree-weighted mean, the score is `f'Lf / f'Df`. Constant features get
/// the worst finite score plus one.
pub fn laplacian_score(matrix: &DataMatrix, sample_graph: &SimilarityGraph) -> Result<RawScores> {
    let n = matrix.n();
    if sample_graph.node_count() != n {
        return Err(Error::LengthMismatch {
            what: "sample graph nodes vs samples",
            expected: n,
            actual: sample_graph.node_count(),
        });
    }
    let w = sample_graph.weights();
    let degrees = sample_graph.degrees().degrees;
    let total: f64 = degrees.iter().sum();

    let scores: Vec<Option<f64>> = matrix
        .view()
        .columns()
        .into_iter()
        .map(|f| {
            let (lo, hi) = f
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            if lo == hi || total <= 0.0 {
                return None;
            }
            let mean = f.iter().zip(&degrees).map(|(v, d)| v * d).sum::<f64>() / total;
            let centered: Vec<f64> = f.iter().map(|v| v - mean).collect();
            let spread: f64 = centered.iter().zip(&degrees).map(|(c, d)| d * c * c).sum();
            if spread <= 0.0 {
                return None;
            }
            // f'Lf = 1/2 sum_ij w_ij (f_i - f_j)^2
            let mut roughness = 0.0;
            for i in 0..n {
                for (j, wij) in w.row(i) {
                    let diff = centered[i] - centered[j];
                    roughness += wij * diff * diff;
                }
            }
            Some(0.5 * roughness / spread)
        })
        .collect();

    let worst = scores
        .iter()
        .flatten()
        .copied()
        .fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |a| a.max(s)))
        });
    let sentinel = worst.unwrap_or(0.0) + 1.0;
    RawScores::new(
        scores.into_iter().map(|s| s.unwrap_or(sentinel)).collect(),
        Orientation::LowerIsBetter,
    )
}

/// Orients (negating lower-is-better), shifts the minimum to zero, and
/// divides by the sum. All-equal scores map to uniform.
pub fn normalize_scores_to_simplex(raw: &RawScores) -> ScoreVector {
    let oriented = raw.oriented();
    let min = oriented.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = oriented.iter().map(|v| v - min).collect();
    ScoreVector::normalized_or_uniform(shifted, Side::Feature)
}

/// Reads one score per line; blank lines are ignored.
pub fn load_external_scores(
    path: impl AsRef<Path>,
    orientation: Orientation,
    expected_len: usize,
) -> Result<RawScores> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_scores(&text, orientation, expected_len)
}

pub fn parse_external_scores(
    text: &str,
    orientation: Orientation,
    expected_len: usize,
) -> Result<RawScores> {
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: idx as u64 + 1,
            message: format!("non-numeric score {line:?}"),
        })?;
        values.push(v);
    }
    if values.len() != expected_len {
        return Err(Error::LengthMismatch {
            what: "external scores vs features",
            expected: expected_len,
            actual: values.len(),
        });
    }
    RawScores::new(values, orientation)
}
