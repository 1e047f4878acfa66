//! End-to-end experiment runner: load, build graphs once, re-rank for every
//! grid cell, and score each top-`m` feature subset with repeated k-means.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::datasets::{load_labels, load_matrix, DataMatrix, LabelVector, LoadOptions};
use crate::error::{Error, Result};
use crate::eval::{evaluate_selection, MeanStd, RunMetrics};
use crate::graphs::{
    bipartite_graph, knn_gaussian_graph, DualLaplacian, GraphParams, NormalizedBlocks, Side,
    SimilarityGraph,
};
use crate::init_scores::{
    initial_sample_scores, laplacian_score, load_external_scores, normalize_scores_to_simplex,
    Orientation, RawScores, ScoreVector,
};
use crate::linalg::mix64;
use crate::rerank::{descending_order, dmrr, fmrr, sfmrr, smrr, RerankParams};
use crate::simplex_qp::SolverOptions;

pub const RESULTS_HEADER: &str =
    "method,lambda1,lambda2,m,acc_mean,acc_std,nmi_mean,nmi_std,purity_mean,purity_std,outer_iters,converged";
pub const SUMMARY_HEADER: &str =
    "method,lambda1,lambda2,acc_avg,nmi_avg,purity_avg,outer_iters,converged,best";
pub const CURVES_HEADER: &str = "m,metric,mean,std";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline,
    Smrr,
    Fmrr,
    Sfmrr,
    Dmrr,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Smrr => "smrr",
            Method::Fmrr => "fmrr",
            Method::Sfmrr => "sfmrr",
            Method::Dmrr => "dmrr",
        }
    }

    fn uses_lambda1(self) -> bool {
        self != Method::Baseline
    }

    fn uses_lambda2(self) -> bool {
        self == Method::Dmrr
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => Method::Baseline,
            "smrr" => Method::Smrr,
            "fmrr" => Method::Fmrr,
            "sfmrr" => Method::Sfmrr,
            "dmrr" => Method::Dmrr,
            other => return Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        })
    }
}

pub fn default_lambda_grid() -> Vec<f64> {
    vec![1e0, 1e1, 1e2, 1e3, 1e4, 1e5]
}

pub fn default_feature_counts() -> Vec<usize> {
    (1..=10).map(|i| i * 10).collect()
}

/// Everything about an experiment except where the data comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub method: Method,
    pub graph: GraphParams,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub feature_counts: Vec<usize>,
    pub kmeans_runs: usize,
    pub base_seed: u64,
    /// Worker threads for grid cells; `None` uses all cores.
    pub jobs: Option<usize>,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub inner: SolverOptions,
    /// Print one line per finished cell to stderr.
    pub progress: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            method: Method::Dmrr,
            graph: GraphParams::default(),
            lambda1_grid: default_lambda_grid(),
            lambda2_grid: default_lambda_grid(),
            feature_counts: default_feature_counts(),
            kmeans_runs: 20,
            base_seed: 0,
            jobs: None,
            outer_tol: 1e-6,
            max_outer_iters: 300,
            inner: SolverOptions::default(),
            progress: false,
        }
    }
}

impl ExperimentSettings {
    fn validate(&self, input: &ExperimentInput) -> Result<()> {
        let d = input.matrix.d();
        if self.method.uses_lambda1() {
            if self.lambda1_grid.is_empty() {
                return Err(Error::InvalidParameter("lambda1 grid is empty".into()));
            }
            if let Some(l) = self
                .lambda1_grid
                .iter()
                .find(|l| !(**l > 0.0 && l.is_finite()))
            {
                return Err(Error::InvalidParameter(format!(
                    "lambda1 must be positive, got {l}"
                )));
            }
        }
        if self.method.uses_lambda2() {
            if self.lambda2_grid.is_empty() {
                return Err(Error::InvalidParameter("lambda2 grid is empty".into()));
            }
            if let Some(l) = self
                .lambda2_grid
                .iter()
                .find(|l| !(**l >= 0.0 && l.is_finite()))
            {
                return Err(Error::InvalidParameter(format!(
                    "lambda2 must be >= 0, got {l}"
                )));
            }
        }
        if self.feature_counts.is_empty() {
            return Err(Error::InvalidParameter("feature counts are empty".into()));
        }
        if let Some(m) = self.feature_counts.iter().find(|&&m| m == 0 || m > d) {
            return Err(Error::InvalidParameter(format!(
                "feature count {m} outside 1..={d}"
            )));
        }
        if self.kmeans_runs == 0 {
            return Err(Error::InvalidParameter("kmeans_runs must be >= 1".into()));
        }
        if input.labels.c() > input.matrix.n() {
            return Err(Error::InvalidParameter(
                "more classes than samples; cannot cluster".into(),
            ));
        }
        input.labels.check_pairs_with(&input.matrix)
    }

    fn grid(&self) -> Vec<GridCell> {
        let l1: Vec<Option<f64>> = if self.method.uses_lambda1() {
            self.lambda1_grid.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let l2: Vec<Option<f64>> = if self.method.uses_lambda2() {
            self.lambda2_grid.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        let mut cells = Vec::with_capacity(l1.len() * l2.len());
        for (i, &lambda1) in l1.iter().enumerate() {
            for (j, &lambda2) in l2.iter().enumerate() {
                cells.push(GridCell {
                    i,
                    j,
                    lambda1,
                    lambda2,
                });
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridCell {
    i: usize,
    j: usize,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
}

impl GridCell {
    fn label(&self) -> String {
        format!(
            "lambda1={}, lambda2={}",
            fmt_lambda(self.lambda1),
            fmt_lambda(self.lambda2)
        )
    }
}

fn fmt_lambda(l: Option<f64>) -> String {
    l.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Seed for k-means run `r` of cell `(i, j)` at feature count `m`.
pub fn derive_seed(base_seed: u64, i: usize, j: usize, m: usize, r: usize) -> u64 {
    let h = [i, j, m, r]
        .iter()
        .fold(0x243f_6a88_85a3_08d3u64, |acc, &x| mix64(acc ^ x as u64));
    base_seed ^ h
}

#[derive(Debug, Clone)]
pub enum ScoreSource {
    /// Built-in Laplacian Score on the sample kNN graph.
    LaplacianScore,
    Provided(RawScores),
}

#[derive(Debug, Clone)]
pub struct ExperimentInput {
    pub matrix: DataMatrix,
    pub labels: LabelVector,
    pub scores: ScoreSource,
}

/// Paths plus settings, one field per command-line flag.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data_path: PathBuf,
    pub load: LoadOptions,
    pub label_path: Option<PathBuf>,
    pub scores_path: Option<PathBuf>,
    pub orientation: Orientation,
    pub out_dir: Option<PathBuf>,
    pub settings: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn load_input(&self) -> Result<ExperimentInput> {
        let (matrix, inline_labels) =
            load_matrix(&self.data_path, &self.load).map_err(|e| e.at_stage("load data", None))?;
        let labels = match (&self.label_path, inline_labels) {
            (Some(path), _) => load_labels(path).map_err(|e| e.at_stage("load labels", None))?,
            (None, Some(labels)) => labels,
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "labels are required: pass a label file or a label column".into(),
                ))
            }
        };
        let scores = match &self.scores_path {
            Some(path) => ScoreSource::Provided(
                load_external_scores(path, self.orientation, matrix.d())
                    .map_err(|e| e.at_stage("load scores", None))?,
            ),
            None => ScoreSource::LaplacianScore,
        };
        Ok(ExperimentInput {
            matrix,
            labels,
            scores,
        })
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub m: usize,
    pub acc: MeanStd,
    pub nmi: MeanStd,
    pub purity: MeanStd,
    pub runs: Vec<RunMetrics>,
    pub outer_iters: usize,
    pub converged: bool,
}

/// Per-cell averages over the feature-count grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: Method,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub acc_avg: f64,
    pub nmi_avg: f64,
    pub purity_avg: f64,
    pub outer_iters: usize,
    pub converged: bool,
    pub feature_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub cells: Vec<CellSummary>,
    /// Index into `cells` of the highest average accuracy (first on ties).
    pub best_cell: usize,
    /// Number of similarity graphs constructed during the run.
    pub graphs_built: usize,
}

impl ExperimentReport {
    pub fn best(&self) -> &CellSummary {
        &self.cells[self.best_cell]
    }

    pub fn rows_for_cell(&self, cell: usize) -> impl Iterator<Item = &ReportRow> {
        let c = &self.cells[cell];
        self.rows
            .iter()
            .filter(move |r| r.lambda1 == c.lambda1 && r.lambda2 == c.lambda2)
    }
}

struct Prepared {
    u0: ScoreVector,
    v0: ScoreVector,
    sample_graph: Option<SimilarityGraph>,
    feature_graph: Option<SimilarityGraph>,
    bipartite: Option<crate::graphs::BipartiteGraph>,
    blocks: Option<Arc<NormalizedBlocks>>,
    graphs_built: usize,
}

fn prepare(input: &ExperimentInput, settings: &ExperimentSettings) -> Result<Prepared> {
    let method = settings.method;
    let matrix = &input.matrix;
    let mut graphs_built = 0;
    let needs_sample = matches!(input.scores, ScoreSource::LaplacianScore)
        || matches!(method, Method::Smrr | Method::Dmrr);
    let needs_feature = matches!(method, Method::Fmrr | Method::Dmrr);
    let needs_bipartite = matches!(method, Method::Sfmrr | Method::Dmrr);

    let sample_graph = if needs_sample {
        graphs_built += 1;
        Some(
            knn_gaussian_graph(matrix, Side::Sample, &settings.graph)
                .map_err(|e| e.at_stage("sample graph", None))?,
        )
    } else {
        None
    };
    let feature_graph = if needs_feature {
        graphs_built += 1;
        Some(
            knn_gaussian_graph(matrix, Side::Feature, &settings.graph)
                .map_err(|e| e.at_stage("feature graph", None))?,
        )
    } else {
        None
    };
    let bipartite = if needs_bipartite {
        graphs_built += 1;
        Some(
            bipartite_graph(matrix, settings.graph.gamma)
                .map_err(|e| e.at_stage("bipartite graph", None))?,
        )
    } else {
        None
    };

    let raw = match &input.scores {
        ScoreSource::Provided(raw) => {
            if raw.values.len() != matrix.d() {
                return Err(Error::LengthMismatch {
                    what: "external scores vs features",
                    expected: matrix.d(),
                    actual: raw.values.len(),
                });
            }
            raw.clone()
        }
        ScoreSource::LaplacianScore => laplacian_score(
            matrix,
            sample_graph
                .as_ref()
                .expect("sample graph built for Laplacian Score"),
        )
        .map_err(|e| e.at_stage("initial feature scores", None))?,
    };

    let blocks = match (&sample_graph, &feature_graph, &bipartite) {
        (Some(a11), Some(a22), Some(a12)) if method == Method::Dmrr => Some(Arc::new(
            NormalizedBlocks::new(a11, a22, a12).map_err(|e| e.at_stage("dual laplacian", None))?,
        )),
        _ => None,
    };

    Ok(Prepared {
        u0: initial_sample_scores(matrix),
        v0: normalize_scores_to_simplex(&raw),
        sample_graph,
        feature_graph,
        bipartite,
        blocks,
        graphs_built,
    })
}

struct CellRanking {
    feature_order: Vec<usize>,
    outer_iters: usize,
    converged: bool,
}

fn rank_cell(
    prep: &Prepared,
    settings: &ExperimentSettings,
    cell: &GridCell,
) -> Result<CellRanking> {
    let lambda1 = cell.lambda1.unwrap_or(1.0);
    let inner = &settings.inner;
    let ranking = match settings.method {
        Method::Baseline => CellRanking {
            feature_order: descending_order(prep.v0.values()),
            outer_iters: 0,
            converged: true,
        },
        // Sample re-ranking leaves feature scores untouched.
        Method::Smrr => {
            smrr(
                prep.sample_graph.as_ref().expect("built"),
                &prep.u0,
                lambda1,
                inner,
            )?;
            CellRanking {
                feature_order: descending_order(prep.v0.values()),
                outer_iters: 1,
                converged: true,
            }
        }
        Method::Fmrr => {
            let v = fmrr(
                prep.feature_graph.as_ref().expect("built"),
                &prep.v0,
                lambda1,
                inner,
            )?;
            CellRanking {
                feature_order: descending_order(v.values()),
                outer_iters: 1,
                converged: true,
            }
        }
        Method::Sfmrr => {
            let out = sfmrr(
                prep.bipartite.as_ref().expect("built"),
                &prep.u0,
                &prep.v0,
                lambda1,
                settings.outer_tol,
                settings.max_outer_iters,
                inner,
            )?;
            CellRanking {
                feature_order: descending_order(out.v.values()),
                outer_iters: out.trace.iterations,
                converged: out.trace.converged,
            }
        }
        Method::Dmrr => {
            let lambda2 = cell.lambda2.unwrap_or(0.0);
            let laplacian =
                DualLaplacian::new(Arc::clone(prep.blocks.as_ref().expect("built")), lambda2)?;
            let params = RerankParams {
                lambda1,
                lambda2,
                tol: settings.outer_tol,
                max_outer_iters: settings.max_outer_iters,
                inner: *inner,
            };
            let out = dmrr(&laplacian, &prep.u0, &prep.v0, &params)?;
            CellRanking {
                feature_order: out.selection.feature_order,
                outer_iters: out.trace.iterations,
                converged: out.trace.converged,
            }
        }
    };
    Ok(ranking)
}

fn evaluate_cell(
    input: &ExperimentInput,
    settings: &ExperimentSettings,
    cell: &GridCell,
    ranking: &CellRanking,
) -> Result<Vec<ReportRow>> {
    settings
        .feature_counts
        .par_iter()
        .map(|&m| {
            let data = input.matrix.select_columns(&ranking.feature_order[..m]);
            let seeds: Vec<u64> = (0..settings.kmeans_runs)
                .map(|r| derive_seed(settings.base_seed, cell.i, cell.j, m, r))
                .collect();
            let record =
                evaluate_selection(data.view(), input.labels.ids(), input.labels.c(), &seeds)?;
            Ok(ReportRow {
                method: settings.method,
                lambda1: cell.lambda1,
                lambda2: cell.lambda2,
                m,
                acc: record.acc,
                nmi: record.nmi,
                purity: record.purity,
                runs: record.runs,
                outer_iters: ranking.outer_iters,
                converged: ranking.converged,
            })
        })
        .collect()
}

/// Runs the full grid on in-memory inputs.
pub fn run_on(input: &ExperimentInput, settings: &ExperimentSettings) -> Result<ExperimentReport> {
    settings.validate(input)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(input, settings))
}

fn run_in_pool(input: &ExperimentInput, settings: &ExperimentSettings) -> Result<ExperimentReport> {
    let prep = prepare(input, settings)?;
    let grid = settings.grid();
    let total = grid.len();

    let per_cell: Vec<(CellSummary, Vec<ReportRow>)> = grid
        .par_iter()
        .map(|cell| {
            let ranking = rank_cell(&prep, settings, cell)
                .map_err(|e| e.at_stage("re-rank", Some(cell.label())))?;
            let rows = evaluate_cell(input, settings, cell, &ranking)
                .map_err(|e| e.at_stage("evaluate", Some(cell.label())))?;
            let avg =
                |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
            let summary = CellSummary {
                method: settings.method,
                lambda1: cell.lambda1,
                lambda2: cell.lambda2,
                acc_avg: avg(|r| r.acc.mean),
                nmi_avg: avg(|r| r.nmi.mean),
                purity_avg: avg(|r| r.purity.mean),
                outer_iters: ranking.outer_iters,
                converged: ranking.converged,
                feature_order: ranking.feature_order,
            };
            if settings.progress {
                eprintln!(
                    "[{}] {} done: acc_avg={:.4} outer_iters={} converged={} ({} cells)",
                    settings.method,
                    cell.label(),
                    summary.acc_avg,
                    summary.outer_iters,
                    summary.converged,
                    total
                );
            }
            Ok((summary, rows))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(per_cell.len());
    let mut rows = Vec::new();
    for (summary, cell_rows) in per_cell {
        cells.push(summary);
        rows.extend(cell_rows);
    }
    let best_cell = cells.iter().enumerate().fold(0, |best, (i, c)| {
        if c.acc_avg > cells[best].acc_avg {
            i
        } else {
            best
        }
    });
    Ok(ExperimentReport {
        rows,
        cells,
        best_cell,
        graphs_built: prep.graphs_built,
    })
}

/// Loads inputs from the configured paths, runs the grid and, when an output
/// directory is set, writes the report files there. The directory is created
/// up front so an unwritable location fails before any computation.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).at_stage("prepare output", None))?;
    }
    let input = config.load_input()?;
    let report = run_on(&input, &config.settings)?;
    if let Some(dir) = &config.out_dir {
        emit_report(&report, dir).map_err(|e| e.at_stage("write report", None))?;
    }
    Ok(report)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn results_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            fmt_lambda(r.lambda1),
            fmt_lambda(r.lambda2),
            r.m,
            r.acc.mean,
            r.acc.std,
            r.nmi.mean,
            r.nmi.std,
            r.purity.mean,
            r.purity.std,
            r.outer_iters,
            r.converged
        ));
    }
    out
}

pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (i, c) in report.cells.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.method,
            fmt_lambda(c.lambda1),
            fmt_lambda(c.lambda2),
            c.acc_avg,
            c.nmi_avg,
            c.purity_avg,
            c.outer_iters,
            c.converged,
            i == report.best_cell
        ));
    }
    out
}

pub fn curves_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    let rows: Vec<&ReportRow> = report.rows_for_cell(report.best_cell).collect();
    for (name, pick) in [
        ("acc", (|r: &ReportRow| r.acc) as fn(&ReportRow) -> MeanStd),
        ("nmi", |r: &ReportRow| r.nmi),
        ("purity", |r: &ReportRow| r.purity),
    ] {
        for r in &rows {
            let s = pick(r);
            out.push_str(&format!("{},{},{},{}\n", r.m, name, s.mean, s.std));
        }
    }
    out
}

/// Writes `results.csv`, `summary.csv` and `curves.csv` into `out_dir`.
pub fn emit_report(report: &ExperimentReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("results.csv", results_csv(report)),
        ("summary.csv", summary_csv(report)),
        ("curves.csv", curves_csv(report)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes one value per line.
pub fn write_vector<T: fmt::Display>(path: impl AsRef<Path>, values: &[T]) -> Result<()> {
    let path = path.as_ref();
    let body: String = values.iter().map(|v| format!("{v}\n")).collect();
    write_file(path, &body)
}
