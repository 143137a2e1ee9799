//! The benchmark grid: (variant x K x alter_ratio) cells over one query and
//! constraint workload, reporting mean recall, QPS, and distance
//! computations per cell as CSV.
//!
//! Timing covers the search loop only; recall is computed afterwards from
//! the recorded results. Queries whose ground-truth row is empty are
//! counted as skipped and excluded from the recall and distance-computation
//! means. Index construction never happens here; the index is loaded and
//! verified against the dataset checksum before any timing starts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;

use airship::config::parse_kv_bytes;
use airship::constraints::{self, Constraint};
use airship::dataset::{self, Dataset};
use airship::graph::ProximityGraph;
use airship::oracle::{self, load_ground_truth, verify_sidecar};
use airship::search::{search, AlterRatio, SearchParams, SearchResult, Variant};

use crate::{for_flag, Failure};

#[derive(Args)]
pub struct BenchArgs {
    /// Flat key=value file supplying any of the other options; explicit
    /// flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base vectors (fvecs).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Base labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Index file (checked against the dataset checksum).
    #[arg(long)]
    index: Option<PathBuf>,
    /// Query vectors (fvecs).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Per-query constraint file.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Ground-truth ivecs (sidecar checked against queries/constraints).
    #[arg(long)]
    groundtruth: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list of vanilla,start,alter,alter_prefer.
    #[arg(long)]
    variants: Option<String>,
    /// Comma list of K values.
    #[arg(long)]
    k_list: Option<String>,
    /// Comma list of fixed ratios and/or "est".
    #[arg(long)]
    ratios: Option<String>,
    /// Timing repetitions per cell (QPS is their mean).
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Constraint-family label copied into the CSV.
    #[arg(long)]
    family: Option<String>,
    /// Inter-query worker threads. More than one makes QPS incomparable to
    /// single-threaded runs.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    estimator_k: Option<usize>,
    /// Pop budget per query, 0 = unbounded.
    #[arg(long)]
    max_visit: Option<usize>,
}

const CONFIG_KEYS: &[&str] = &[
    "data",
    "labels",
    "index",
    "queries",
    "constraints",
    "groundtruth",
    "out",
    "variants",
    "k_list",
    "ratios",
    "reps",
    "seed",
    "family",
    "threads",
    "estimator_k",
    "max_visit",
];

struct Resolved {
    data: PathBuf,
    labels: PathBuf,
    index: PathBuf,
    queries: PathBuf,
    constraints: PathBuf,
    groundtruth: PathBuf,
    out: PathBuf,
    variants: Vec<Variant>,
    k_list: Vec<usize>,
    ratios: Vec<RatioSetting>,
    reps: usize,
    seed: u64,
    family: String,
    threads: usize,
    estimator_k: usize,
    max_visit: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum RatioSetting {
    Fixed(f32),
    Estimated,
}

impl RatioSetting {
    fn label(self) -> String {
        match self {
            RatioSetting::Fixed(r) => format!("{r}"),
            RatioSetting::Estimated => "est".to_string(),
        }
    }

    fn as_alter_ratio(self) -> AlterRatio {
        match self {
            RatioSetting::Fixed(r) => AlterRatio::Fixed(r),
            RatioSetting::Estimated => AlterRatio::Estimated,
        }
    }
}

fn resolve(args: BenchArgs) -> Result<Resolved, Failure> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    if let Some(path) = &args.config {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::config(format!("--config: {}: {e}", path.display())))?;
        for (key, value) in
            parse_kv_bytes(&bytes).map_err(|e| Failure::config(format!("--config: {e}")))?
        {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Failure::config(format!("--config: unknown key {key:?}")));
            }
            kv.insert(key, value);
        }
    }

    let path = |flag: Option<PathBuf>, key: &str| -> Result<PathBuf, Failure> {
        flag.or_else(|| kv.get(key).map(PathBuf::from))
            .ok_or_else(|| Failure::config(format!("--{} is required", key.replace('_', "-"))))
    };
    let text = |flag: Option<String>, key: &str, default: &str| -> String {
        flag.or_else(|| kv.get(key).cloned()).unwrap_or_else(|| default.to_string())
    };

    let variants_raw = text(args.variants, "variants", "vanilla,start,alter,alter_prefer");
    let mut variants = Vec::new();
    for name in variants_raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        variants.push(Variant::parse(name)?);
    }
    variants.sort_by_key(|v| variant_order(*v));
    variants.dedup();
    if variants.is_empty() {
        return Err(Failure::config("--variants: empty variant list"));
    }

    let k_raw = text(args.k_list, "k_list", "10");
    let mut k_list = Vec::new();
    for field in k_raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: usize = field
            .parse()
            .map_err(|_| Failure::config(format!("--k-list: invalid K {field:?}")))?;
        if k == 0 {
            return Err(Failure::config("--k-list: K must be >= 1"));
        }
        k_list.push(k);
    }
    k_list.sort_unstable();
    k_list.dedup();
    if k_list.is_empty() {
        return Err(Failure::config("--k-list: empty K list"));
    }

    let ratios_raw = text(args.ratios, "ratios", "est");
    let mut fixed = Vec::new();
    let mut estimated = false;
    for field in ratios_raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if field == "est" || field == "estimated" {
            estimated = true;
            continue;
        }
        let r: f32 = field
            .parse()
            .map_err(|_| Failure::config(format!("--ratios: invalid ratio {field:?}")))?;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Failure::config(format!("--ratios: ratio {r} out of range (0, 1]")));
        }
        fixed.push(r);
    }
    fixed.sort_by(f32::total_cmp);
    fixed.dedup();
    let mut ratios: Vec<RatioSetting> = fixed.into_iter().map(RatioSetting::Fixed).collect();
    if estimated {
        ratios.push(RatioSetting::Estimated);
    }
    if ratios.is_empty() {
        return Err(Failure::config("--ratios: empty ratio list"));
    }

    let number = |flag: Option<usize>, key: &str, default: usize| -> Result<usize, Failure> {
        match flag {
            Some(v) => Ok(v),
            None => match kv.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Failure::config(format!("--config: {key}: invalid value {raw:?}"))),
                None => Ok(default),
            },
        }
    };
    let seed = match args.seed {
        Some(v) => v,
        None => match kv.get("seed") {
            Some(raw) => raw
                .parse()
                .map_err(|_| Failure::config(format!("--config: seed: invalid value {raw:?}")))?,
            None => 0,
        },
    };

    let reps = number(args.reps, "reps", 3)?;
    if reps == 0 {
        return Err(Failure::config("--reps must be >= 1"));
    }
    let threads = number(args.threads, "threads", 1)?;
    if threads == 0 {
        return Err(Failure::config("--threads must be >= 1"));
    }

    Ok(Resolved {
        data: path(args.data, "data")?,
        labels: path(args.labels, "labels")?,
        index: path(args.index, "index")?,
        queries: path(args.queries, "queries")?,
        constraints: path(args.constraints, "constraints")?,
        groundtruth: path(args.groundtruth, "groundtruth")?,
        out: path(args.out, "out")?,
        variants,
        k_list,
        ratios,
        reps,
        seed,
        family: text(args.family, "family", "custom"),
        threads,
        estimator_k: number(args.estimator_k, "estimator_k", 10)?,
        max_visit: number(args.max_visit, "max_visit", 0)?,
    })
}

fn variant_order(v: Variant) -> u8 {
    match v {
        Variant::Vanilla => 0,
        Variant::Start => 1,
        Variant::Alter => 2,
        Variant::AlterPrefer => 3,
    }
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;

    let mut data = for_flag(dataset::load_fvecs(&cfg.data), "--data")?;
    let labels = for_flag(dataset::load_labels(&cfg.labels), "--labels")?;
    data.set_labels(labels)?;
    // abort before timing on an index/data mismatch
    let graph = for_flag(ProximityGraph::load(&cfg.index, Some(data.checksum())), "--index")?;
    let queries = for_flag(dataset::load_fvecs(&cfg.queries), "--queries")?;
    let constraints =
        for_flag(constraints::load_constraints(&cfg.constraints), "--constraints")?;
    let (truth, sidecar) = for_flag(load_ground_truth(&cfg.groundtruth), "--groundtruth")?;
    verify_sidecar(&sidecar, &cfg.queries, &cfg.constraints)?;

    if queries.n() != constraints.len() {
        return Err(Failure::config(format!(
            "{} queries but {} constraints",
            queries.n(),
            constraints.len()
        )));
    }
    if truth.rows.len() != queries.n() {
        return Err(Failure::config(format!(
            "{} queries but {} ground-truth rows",
            queries.n(),
            truth.rows.len()
        )));
    }
    let max_k = *cfg.k_list.last().unwrap();
    if truth.k < max_k {
        return Err(Failure::config(format!(
            "ground truth holds top-{} but the grid needs top-{max_k}",
            truth.k
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Failure::config(format!("--threads: {e}")))?;

    let mut csv = String::from("variant,K,alter_ratio,family,recall,qps,dist_comps,skipped\n");
    let started = Instant::now();
    let mut cells = 0usize;
    for &variant in &cfg.variants {
        for &k in &cfg.k_list {
            for &ratio in &cfg.ratios {
                let record =
                    run_cell(&cfg, &graph, &data, &queries, &constraints, &truth, variant, k, ratio, &pool);
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    variant.name(),
                    k,
                    ratio.label(),
                    cfg.family,
                    record.recall,
                    record.qps,
                    record.dist_comps,
                    record.skipped
                ));
                cells += 1;
            }
        }
    }

    let mut file = std::fs::File::create(&cfg.out)
        .map_err(|e| Failure::config(format!("--out: {}: {e}", cfg.out.display())))?;
    file.write_all(csv.as_bytes())
        .map_err(|e| Failure::config(format!("--out: {}: {e}", cfg.out.display())))?;
    println!(
        "bench: cells={cells} queries={} reps={} threads={} elapsed={:.3}s -> {}",
        queries.n(),
        cfg.reps,
        cfg.threads,
        started.elapsed().as_secs_f64(),
        cfg.out.display()
    );
    Ok(())
}

struct CellRecord {
    recall: f64,
    qps: f64,
    dist_comps: f64,
    skipped: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &Resolved,
    graph: &ProximityGraph,
    data: &Dataset,
    queries: &Dataset,
    constraints: &[Constraint],
    truth: &oracle::GroundTruth,
    variant: Variant,
    k: usize,
    ratio: RatioSetting,
    pool: &rayon::ThreadPool,
) -> CellRecord {
    let run_query = |qi: usize| -> SearchResult {
        let params = SearchParams {
            k,
            variant,
            alter_ratio: ratio.as_alter_ratio(),
            estimator_k: cfg.estimator_k,
            max_visit: cfg.max_visit,
            rng_seed: cfg.seed.wrapping_add(qi as u64),
        };
        search(graph, data, queries.row(qi), &constraints[qi], &params)
            .expect("bench inputs were validated up front")
    };

    let mut qps_sum = 0.0;
    let mut results: Vec<SearchResult> = Vec::new();
    for rep in 0..cfg.reps {
        let clock = Instant::now();
        let rep_results: Vec<SearchResult> = if cfg.threads > 1 {
            use rayon::prelude::*;
            pool.install(|| (0..queries.n()).into_par_iter().map(run_query).collect())
        } else {
            (0..queries.n()).map(run_query).collect()
        };
        let elapsed = clock.elapsed().as_secs_f64();
        qps_sum += oracle::qps(elapsed.max(f64::MIN_POSITIVE), queries.n());
        if rep == 0 {
            results = rep_results;
        }
    }

    let mut recall_sum = 0.0;
    let mut comps_sum = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for (qi, result) in results.iter().enumerate() {
        let row = &truth.rows[qi];
        let denominator = &row[..k.min(row.len())];
        match oracle::recall(&result.hit_ids(), denominator) {
            Some(r) => {
                recall_sum += r;
                comps_sum += result.stats.distance_computations as f64;
                counted += 1;
            }
            None => skipped += 1,
        }
    }
    CellRecord {
        recall: if counted > 0 { recall_sum / counted as f64 } else { 0.0 },
        qps: qps_sum / cfg.reps as f64,
        dist_comps: if counted > 0 { comps_sum / counted as f64 } else { 0.0 },
        skipped,
    }
}
