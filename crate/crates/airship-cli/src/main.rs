//! Command-line harness around the constrained-search library: index
//! construction, label/constraint synthesis, exact ground truth, ad-hoc
//! queries, ratio estimation, and the recall/QPS benchmark.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad flags, missing
//! or malformed inputs), 3 on a checksum mismatch between an index or
//! ground-truth file and the data presented with it.

mod bench;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use airship::constraints::{self, ConstraintFamily};
use airship::dataset;
use airship::graph::{BuildParams, ProximityGraph};
use airship::labeling::{
    assign_cluster_labels_with_centroids, assign_labels_from_centroids, LabelingConfig,
};
use airship::oracle::{self, GroundTruthSidecar};
use airship::search::{
    estimate_alter_ratio, satisfied_sample, search, AlterRatio, SearchParams, Variant,
    DEFAULT_ESTIMATOR_K,
};
use airship::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECKSUM: u8 = 3;

#[derive(Parser)]
#[command(name = "airship", version, about = "Constrained similarity search on a proximity graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a proximity-graph index over an fvecs dataset.
    Build(BuildArgs),
    /// Assign cluster labels to vectors (k-means plus optional randomness).
    Labels(LabelsArgs),
    /// Synthesize per-query constraints from query labels.
    Constraints(ConstraintsArgs),
    /// Compute exact constrained ground truth (ivecs + JSON sidecar).
    Groundtruth(GroundtruthArgs),
    /// Run the recall/QPS benchmark grid and write a CSV.
    Bench(bench::BenchArgs),
    /// Print the estimated alter ratio for each constraint.
    Estimate(EstimateArgs),
    /// Run one ad-hoc constrained query.
    Search(SearchArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Base vectors (fvecs).
    #[arg(long)]
    data: PathBuf,
    /// Output index file.
    #[arg(long)]
    out: PathBuf,
    /// Maximum adjacency-list length.
    #[arg(long, default_value_t = 16)]
    degree: usize,
    /// Candidate-pool size during construction.
    #[arg(long, default_value_t = 128)]
    ef: usize,
    /// Starting-point sample size stored in the index.
    #[arg(long, default_value_t = 1000)]
    sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LabelsArgs {
    /// Vectors to label (fvecs).
    #[arg(long)]
    data: PathBuf,
    /// Output labels file (one integer per line).
    #[arg(long)]
    out: PathBuf,
    /// Number of k-means clusters.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Percent of labels replaced by a uniform random label.
    #[arg(long, default_value_t = 0)]
    randomness: u32,
    /// Lloyd iteration count.
    #[arg(long, default_value_t = 25)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fitted centroids (fvecs) for labeling other files.
    #[arg(long)]
    centroids_out: Option<PathBuf>,
    /// Skip k-means and label by nearest centroid from this fvecs file.
    #[arg(long)]
    centroids_in: Option<PathBuf>,
}

#[derive(Args)]
struct ConstraintsArgs {
    /// Labels of the query vectors.
    #[arg(long)]
    query_labels: PathBuf,
    /// Total number of distinct labels.
    #[arg(long)]
    num_labels: u32,
    /// Constraint family: equal | unequal.
    #[arg(long)]
    family: String,
    /// X for unequal-X% (percent of labels allowed).
    #[arg(long)]
    pct: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output constraint file (one line per query).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GroundtruthArgs {
    /// Base vectors (fvecs).
    #[arg(long)]
    data: PathBuf,
    /// Base labels.
    #[arg(long)]
    labels: PathBuf,
    /// Query vectors (fvecs).
    #[arg(long)]
    queries: PathBuf,
    /// Per-query constraints.
    #[arg(long)]
    constraints: PathBuf,
    /// Neighbors per query.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Output ivecs file (sidecar written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Index file.
    #[arg(long)]
    index: PathBuf,
    /// Base labels.
    #[arg(long)]
    labels: PathBuf,
    /// Constraint file.
    #[arg(long)]
    constraints: PathBuf,
    /// Stored edges inspected per starting point.
    #[arg(long, default_value_t = DEFAULT_ESTIMATOR_K)]
    estimator_k: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Query vectors (fvecs); one row is searched.
    #[arg(long)]
    queries: PathBuf,
    /// Row of the query file to search.
    #[arg(long, default_value_t = 0)]
    query_index: usize,
    /// Allowed label ids, comma separated (overrides --constraints).
    #[arg(long)]
    allowed: Option<String>,
    /// Constraint file; the row at --query-index applies.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// vanilla | start | alter | alter_prefer
    #[arg(long, default_value = "alter_prefer")]
    variant: String,
    /// Fixed alter ratio in (0,1], or "est" to estimate per query.
    #[arg(long, default_value = "est")]
    ratio: String,
    #[arg(long, default_value_t = DEFAULT_ESTIMATOR_K)]
    estimator_k: usize,
    /// Pop budget, 0 = unbounded.
    #[arg(long, default_value_t = 0)]
    max_visit: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure carrying its process exit code.
pub(crate) struct Failure {
    pub(crate) code: u8,
    pub(crate) message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::ChecksumMismatch { .. } => EXIT_CHECKSUM,
            _ => EXIT_CONFIG,
        };
        Failure { code, message: err.to_string() }
    }
}

impl Failure {
    pub(crate) fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
}

/// Attach the flag name a failing input came from.
pub(crate) fn for_flag<T>(result: airship::Result<T>, flag: &str) -> Result<T, Failure> {
    result.map_err(|err| {
        let mut failure = Failure::from(err);
        failure.message = format!("{flag}: {}", failure.message);
        failure
    })
}

fn parse_ratio(raw: &str) -> Result<AlterRatio, Failure> {
    if raw == "est" || raw == "estimated" {
        return Ok(AlterRatio::Estimated);
    }
    let value: f32 = raw
        .parse()
        .map_err(|_| Failure::config(format!("--ratio: expected a number or \"est\", got {raw:?}")))?;
    Ok(AlterRatio::Fixed(value))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Labels(args) => cmd_labels(args),
        Command::Constraints(args) => cmd_constraints(args),
        Command::Groundtruth(args) => cmd_groundtruth(args),
        Command::Bench(args) => bench::cmd_bench(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Search(args) => cmd_search(args),
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), Failure> {
    let data = for_flag(dataset::load_fvecs(&args.data), "--data")?;
    let params = BuildParams {
        max_degree: args.degree,
        ef_construction: args.ef,
        sample_size: args.sample,
        rng_seed: args.seed,
    };
    let started = Instant::now();
    let graph = ProximityGraph::build(&data, &params)?;
    let elapsed = started.elapsed().as_secs_f64();
    graph.save(&args.out)?;
    println!(
        "built index: n={} d={} degree={} ef={} sample={} seed={} checksum={:#018x} elapsed={elapsed:.3}s -> {}",
        graph.n(),
        graph.d(),
        args.degree,
        args.ef,
        graph.sample().len(),
        args.seed,
        graph.meta().dataset_checksum,
        args.out.display()
    );
    Ok(())
}

fn cmd_labels(args: LabelsArgs) -> Result<(), Failure> {
    let data = for_flag(dataset::load_fvecs(&args.data), "--data")?;
    let started = Instant::now();
    let labels = match &args.centroids_in {
        Some(path) => {
            let centroids = for_flag(dataset::load_fvecs(path), "--centroids-in")?;
            assign_labels_from_centroids(&data, &centroids, args.randomness, args.seed)?
        }
        None => {
            let config = LabelingConfig {
                num_clusters: args.k,
                randomness_pct: args.randomness,
                kmeans_iters: args.iters,
                rng_seed: args.seed,
            };
            let (labels, centroids) = assign_cluster_labels_with_centroids(&data, &config)?;
            if let Some(path) = &args.centroids_out {
                for_flag(dataset::save_fvecs(&centroids, path), "--centroids-out")?;
            }
            labels
        }
    };
    dataset::save_labels(&labels, &args.out)?;
    println!(
        "labeled: n={} d={} k={} randomness={}% elapsed={:.3}s -> {}",
        data.n(),
        data.d(),
        args.k,
        args.randomness,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn cmd_constraints(args: ConstraintsArgs) -> Result<(), Failure> {
    let query_labels = for_flag(dataset::load_labels(&args.query_labels), "--query-labels")?;
    let family = match args.family.as_str() {
        "equal" => ConstraintFamily::Equal,
        "unequal" => {
            let pct = args
                .pct
                .ok_or_else(|| Failure::config("--pct is required with --family unequal"))?;
            ConstraintFamily::UnequalPct(pct)
        }
        other => {
            return Err(Failure::config(format!(
                "--family: expected equal or unequal, got {other:?}"
            )))
        }
    };
    let constraints =
        constraints::synthesize_constraints(family, &query_labels, args.num_labels, args.seed)?;
    constraints::save_constraints(&constraints, &args.out)?;
    println!(
        "constraints: queries={} family={} num_labels={} -> {}",
        constraints.len(),
        args.family,
        args.num_labels,
        args.out.display()
    );
    Ok(())
}

fn cmd_groundtruth(args: GroundtruthArgs) -> Result<(), Failure> {
    let mut data = for_flag(dataset::load_fvecs(&args.data), "--data")?;
    let labels = for_flag(dataset::load_labels(&args.labels), "--labels")?;
    data.set_labels(labels)?;
    let queries = for_flag(dataset::load_fvecs(&args.queries), "--queries")?;
    let constraints =
        for_flag(constraints::load_constraints(&args.constraints), "--constraints")?;
    let started = Instant::now();
    let truth = oracle::generate_ground_truth(&data, &queries, &constraints, args.k)?;
    let sidecar = GroundTruthSidecar {
        k: args.k,
        query_checksum: dataset::checksum_file(&args.queries)?,
        constraint_checksum: dataset::checksum_file(&args.constraints)?,
    };
    oracle::save_ground_truth(&truth, &args.out, &sidecar)?;
    println!(
        "ground truth: queries={} k={} elapsed={:.3}s -> {}",
        truth.rows.len(),
        args.k,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Failure> {
    let graph = for_flag(ProximityGraph::load(&args.index, None), "--index")?;
    let labels = for_flag(dataset::load_labels(&args.labels), "--labels")?;
    if labels.len() != graph.n() {
        return Err(Failure::config(format!(
            "--labels: {} labels for an index of {} vertices",
            labels.len(),
            graph.n()
        )));
    }
    let constraints =
        for_flag(constraints::load_constraints(&args.constraints), "--constraints")?;
    // tolerate a closed pipe (e.g. piping into head)
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if writeln!(out, "constraint\tssv\testimate").is_err() {
        return Ok(());
    }
    for (i, constraint) in constraints.iter().enumerate() {
        let ssv = satisfied_sample(&graph, &labels, constraint);
        let line = if ssv.is_empty() {
            format!("{i}\t0\tfallback")
        } else {
            let estimate =
                estimate_alter_ratio(&graph, &labels, constraint, &ssv, args.estimator_k);
            format!("{i}\t{}\t{estimate}", ssv.len())
        };
        if writeln!(out, "{line}").is_err() {
            return Ok(());
        }
    }
    Ok(())
}

fn cmd_search(args: SearchArgs) -> Result<(), Failure> {
    let mut data = for_flag(dataset::load_fvecs(&args.data), "--data")?;
    let labels = for_flag(dataset::load_labels(&args.labels), "--labels")?;
    data.set_labels(labels)?;
    let graph = for_flag(ProximityGraph::load(&args.index, Some(data.checksum())), "--index")?;
    let queries = for_flag(dataset::load_fvecs(&args.queries), "--queries")?;
    if args.query_index >= queries.n() {
        return Err(Failure::config(format!(
            "--query-index {} out of range: query file has {} rows",
            args.query_index,
            queries.n()
        )));
    }
    let constraint = match (&args.allowed, &args.constraints) {
        (Some(list), _) => {
            let ids: Result<Vec<u32>, _> =
                list.split(',').map(|f| f.trim().parse::<u32>()).collect();
            let ids = ids
                .map_err(|_| Failure::config(format!("--allowed: invalid label list {list:?}")))?;
            constraints::Constraint::new(ids)?
        }
        (None, Some(path)) => {
            let all = for_flag(constraints::load_constraints(path), "--constraints")?;
            all.get(args.query_index)
                .cloned()
                .ok_or_else(|| {
                    Failure::config(format!(
                        "--constraints: no row {} in {}",
                        args.query_index,
                        path.display()
                    ))
                })?
        }
        (None, None) => {
            return Err(Failure::config("one of --allowed or --constraints is required"))
        }
    };
    let params = SearchParams {
        k: args.k,
        variant: Variant::parse(&args.variant)?,
        alter_ratio: parse_ratio(&args.ratio)?,
        estimator_k: args.estimator_k,
        max_visit: args.max_visit,
        rng_seed: args.seed,
    };
    let started = Instant::now();
    let result = search(&graph, &data, queries.row(args.query_index), &constraint, &params)?;
    let elapsed = started.elapsed().as_secs_f64();
    for (rank, (id, dist)) in result.hits.iter().enumerate() {
        println!("{rank}\t{id}\t{dist}");
    }
    println!(
        "# stats: dist_comps={} popped={} satisfied_popped={} terminated_by={} elapsed={elapsed:.6}s",
        result.stats.distance_computations,
        result.stats.vertices_popped,
        result.stats.satisfied_popped,
        result.stats.terminated_by.name()
    );
    Ok(())
}
