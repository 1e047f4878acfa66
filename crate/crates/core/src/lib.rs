//! Unsupervised feature selection by dual manifold re-ranking.
//!
//! A data matrix yields three graphs: a kNN graph over samples, a kNN graph
//! over features, and a sample-feature bipartite graph. Initial feature
//! scores (Laplacian Score or any external scorer) are then refined jointly
//! with sample scores by alternating simplex-constrained quadratic programs,
//! and the top-ranked features are judged by k-means clustering quality.
//!
//! ```no_run
//! use dmrr_core::{
//!     bipartite_graph, dmrr, initial_sample_scores, knn_gaussian_graph, laplacian_score,
//!     normalize_scores_to_simplex, DataMatrix, DualLaplacian, GraphParams, NormalizedBlocks,
//!     RerankParams, Side,
//! };
//! use std::sync::Arc;
//!
//! # fn main() -> dmrr_core::Result<()> {
//! let (matrix, _) = dmrr_core::datasets::load_matrix("data.csv", &Default::default())?;
//! let params = GraphParams::default();
//! let samples = knn_gaussian_graph(&matrix, Side::Sample, &params)?;
//! let features = knn_gaussian_graph(&matrix, Side::Feature, &params)?;
//! let bipartite = bipartite_graph(&matrix, params.gamma)?;
//! let blocks = Arc::new(NormalizedBlocks::new(&samples, &features, &bipartite)?);
//!
//! let v0 = normalize_scores_to_simplex(&laplacian_score(&matrix, &samples)?);
//! let u0 = initial_sample_scores(&matrix);
//! let laplacian = DualLaplacian::new(blocks, 10.0)?;
//! let outcome = dmrr(&laplacian, &u0, &v0, &RerankParams::new(100.0, 10.0))?;
//! println!("top features: {:?}", &outcome.selection.feature_order[..10]);
//! # Ok(())
//! # }
//! ```

pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graphs;
pub mod init_scores;
mod linalg;
pub mod rerank;
pub mod simplex_qp;

pub use datasets::{DataMatrix, LabelVector, LoadOptions};
pub use error::{Error, Result};
pub use eval::{MeanStd, MetricsRecord, RunMetrics};
pub use experiment::{ExperimentConfig, ExperimentReport, ExperimentSettings, Method};
pub use graphs::{
    bipartite_graph, knn_gaussian_graph, BipartiteGraph, CsrMatrix, DualLaplacian, GraphParams,
    NormalizedBlocks, Side, SimilarityGraph,
};
pub use init_scores::{
    initial_sample_scores, laplacian_score, normalize_scores_to_simplex, Orientation, RawScores,
    ScoreVector,
};
pub use rerank::{dmrr, DmrrOutcome, ObjectiveTrace, RerankParams, SelectionResult};
pub use simplex_qp::{SolverOptions, SolverReport};
