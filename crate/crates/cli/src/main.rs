use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmrr_core::datasets::{describe, load_matrix, LoadOptions};
use dmrr_core::experiment::{
    default_feature_counts, default_lambda_grid, run_experiment, write_vector, ExperimentConfig,
    ExperimentSettings, Method,
};
use dmrr_core::init_scores::load_external_scores;
use dmrr_core::{
    bipartite_graph, dmrr, initial_sample_scores, knn_gaussian_graph, laplacian_score,
    normalize_scores_to_simplex, DataMatrix, DualLaplacian, GraphParams, NormalizedBlocks,
    Orientation, RerankParams, Side,
};

#[derive(Parser, Debug)]
#[command(
    name = "dmrr",
    version,
    about = "Unsupervised feature selection by dual manifold re-ranking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the parameter grid and write results.csv, summary.csv and curves.csv.
    Run(RunArgs),
    /// Print the shape and per-feature ranges of a data file.
    Describe(DataArgs),
    /// Re-rank once and write u.txt, v.txt and feature_order.txt.
    Rerank(RerankArgs),
    /// Write one graph as "row col weight" lines.
    DumpGraph(DumpArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Delimited numeric file, one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// Field separator: "comma", "tab" or a single character.
    #[arg(long, default_value = "comma", value_parser = parse_delimiter)]
    delimiter: u8,
    /// Skip the first row.
    #[arg(long)]
    header: bool,
    /// Zero-based column of the data file holding class labels.
    #[arg(long)]
    label_column: Option<usize>,
}

impl DataArgs {
    fn load_options(&self) -> LoadOptions {
        LoadOptions {
            delimiter: self.delimiter,
            has_header: self.header,
            label_column: self.label_column,
        }
    }

    fn load(&self) -> Result<DataMatrix> {
        let (matrix, _) = load_matrix(&self.data, &self.load_options())
            .with_context(|| format!("loading {}", self.data.display()))?;
        Ok(matrix)
    }
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Neighbours per node in the kNN graphs.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Gaussian kernel sharpness.
    #[arg(long, default_value_t = 8.0)]
    gamma: f64,
}

impl GraphArgs {
    fn params(&self) -> GraphParams {
        GraphParams {
            k: self.k,
            gamma: self.gamma,
        }
    }
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// External feature scores, one per line. Defaults to the Laplacian Score.
    #[arg(long, requires = "orientation")]
    scores: Option<PathBuf>,
    /// Whether larger external scores mean better features.
    #[arg(long, value_enum)]
    orientation: Option<OrientationArg>,
}

impl ScoreArgs {
    fn orientation(&self) -> Orientation {
        self.orientation
            .map_or(Orientation::LowerIsBetter, Orientation::from)
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum OrientationArg {
    Higher,
    Lower,
}

impl From<OrientationArg> for Orientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::Higher => Orientation::HigherIsBetter,
            OrientationArg::Lower => Orientation::LowerIsBetter,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Label file, one label per line.
    #[arg(
        long,
        required_unless_present = "label_column",
        conflicts_with = "label_column"
    )]
    labels: Option<PathBuf>,
    #[command(flatten)]
    scores: ScoreArgs,
    /// One of baseline, smrr, fmrr, sfmrr or dmrr.
    #[arg(long, default_value = "dmrr", value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    graph: GraphArgs,
    /// Comma-separated fit weights.
    #[arg(long, value_parser = parse_lambdas)]
    lambda1: Option<::std::vec::Vec<f64>>,
    /// Comma-separated coupling weights.
    #[arg(long, value_parser = parse_lambdas)]
    lambda2: Option<::std::vec::Vec<f64>>,
    /// Feature counts as start:step:stop or a comma list.
    #[arg(long, value_parser = parse_feature_counts)]
    features: Option<::std::vec::Vec<usize>>,
    #[arg(long, default_value_t = 20)]
    kmeans_runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Suppress per-cell progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct RerankArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    scores: ScoreArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    lambda1: f64,
    #[arg(long)]
    lambda2: f64,
    /// Directory for u.txt, v.txt and feature_order.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GraphKind {
    Sample,
    Feature,
    Bipartite,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, value_enum)]
    kind: GraphKind,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "comma" | "," => Ok(b','),
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        "space" | " " => Ok(b' '),
        "semicolon" | ";" => Ok(b';'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("unsupported delimiter {s:?}")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: dmrr_core::Error| e.to_string())
}

fn parse_lambdas(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn parse_feature_counts(s: &str) -> Result<Vec<usize>, String> {
    let number = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, step, stop] = parts[..] else {
            return Err(format!("expected start:step:stop, got {s:?}"));
        };
        let (start, step, stop) = (number(start)?, number(step)?, number(stop)?);
        if step == 0 || start > stop {
            return Err(format!("empty range {s:?}"));
        }
        Ok((start..=stop).step_by(step).collect())
    } else {
        s.split(',').map(number).collect()
    }
}

fn run(args: RunArgs) -> Result<()> {
    let settings = ExperimentSettings {
        method: args.method,
        graph: args.graph.params(),
        lambda1_grid: args.lambda1.unwrap_or_else(default_lambda_grid),
        lambda2_grid: args.lambda2.unwrap_or_else(default_lambda_grid),
        feature_counts: args.features.unwrap_or_else(default_feature_counts),
        kmeans_runs: args.kmeans_runs,
        base_seed: args.seed,
        jobs: args.jobs,
        progress: !args.quiet,
        ..ExperimentSettings::default()
    };
    let config = ExperimentConfig {
        data_path: args.data.data.clone(),
        load: args.data.load_options(),
        label_path: args.labels,
        scores_path: args.scores.scores.clone(),
        orientation: args.scores.orientation(),
        out_dir: Some(args.out.clone()),
        settings,
    };
    let report = run_experiment(&config)?;
    let best = report.best();
    let lambda = |l: Option<f64>| l.map_or("-".to_string(), |v| v.to_string());
    eprintln!(
        "best cell lambda1={} lambda2={}: acc_avg={:.4} nmi_avg={:.4} purity_avg={:.4}",
        lambda(best.lambda1),
        lambda(best.lambda2),
        best.acc_avg,
        best.nmi_avg,
        best.purity_avg
    );
    for name in ["results.csv", "summary.csv", "curves.csv"] {
        println!("{}", args.out.join(name).display());
    }
    Ok(())
}

fn describe_cmd(args: DataArgs) -> Result<()> {
    let matrix = args.load()?;
    let summary = describe(&matrix);
    let mut out = io::stdout().lock();
    writeln!(out, "samples {}", summary.n)?;
    writeln!(out, "features {}", summary.d)?;
    writeln!(out, "feature,min,max,mean")?;
    for j in 0..summary.d {
        let name = matrix
            .feature_names()
            .map_or_else(|| j.to_string(), |names| names[j].clone());
        writeln!(
            out,
            "{name},{},{},{}",
            summary.mins[j], summary.maxs[j], summary.means[j]
        )?;
    }
    Ok(())
}

fn rerank_cmd(args: RerankArgs) -> Result<()> {
    let matrix = args.data.load()?;
    let params = args.graph.params();
    let samples = knn_gaussian_graph(&matrix, Side::Sample, &params)?;
    let features = knn_gaussian_graph(&matrix, Side::Feature, &params)?;
    let bipartite = bipartite_graph(&matrix, params.gamma)?;
    let raw = match &args.scores.scores {
        Some(path) => load_external_scores(path, args.scores.orientation(), matrix.d())?,
        None => laplacian_score(&matrix, &samples)?,
    };
    let v0 = normalize_scores_to_simplex(&raw);
    let u0 = initial_sample_scores(&matrix);
    let blocks = Arc::new(NormalizedBlocks::new(&samples, &features, &bipartite)?);
    let laplacian = DualLaplacian::new(blocks, args.lambda2)?;
    let outcome = dmrr(
        &laplacian,
        &u0,
        &v0,
        &RerankParams::new(args.lambda1, args.lambda2),
    )?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let selection = &outcome.selection;
    let Some(u) = &selection.sample_scores else {
        bail!("re-ranking returned no sample scores");
    };
    write_vector(args.out.join("u.txt"), u.values())?;
    write_vector(args.out.join("v.txt"), selection.scores.values())?;
    write_vector(args.out.join("feature_order.txt"), &selection.feature_order)?;
    let trace = &outcome.trace;
    eprintln!(
        "{} sweeps, converged={}, final objective {}{}",
        trace.iterations,
        trace.converged,
        trace.values.last().copied().unwrap_or(f64::NAN),
        if trace.indefinite {
            " (indefinite subproblem)"
        } else {
            ""
        }
    );
    Ok(())
}

fn dump_graph_cmd(args: DumpArgs) -> Result<()> {
    let matrix = args.data.load()?;
    let params = args.graph.params();
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => {
            Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match args.kind {
        GraphKind::Sample => {
            knn_gaussian_graph(&matrix, Side::Sample, &params)?.write_coo(&mut sink)?
        }
        GraphKind::Feature => {
            knn_gaussian_graph(&matrix, Side::Feature, &params)?.write_coo(&mut sink)?
        }
        GraphKind::Bipartite => bipartite_graph(&matrix, params.gamma)?.write_coo(&mut sink)?,
    }
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Describe(args) => describe_cmd(args),
        Command::Rerank(args) => rerank_cmd(args),
        Command::DumpGraph(args) => dump_graph_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
