//! Exact ground truth and retrieval-quality metrics.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::Constraint;
use crate::dataset::{checksum_file, load_ivecs, save_ivecs, Dataset};
use crate::error::{Error, Result};
use crate::search::brute_force_constrained;

/// Per-query exact constrained top-K ids, each row ascending by distance
/// (ties to the lower id). A row is shorter than K when fewer satisfied
/// vectors exist, and empty when none do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub rows: Vec<Vec<u32>>,
    pub k: usize,
}

/// JSON sidecar pinning the files a ground-truth run was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSidecar {
    pub k: usize,
    pub query_checksum: u64,
    pub constraint_checksum: u64,
}

/// Exact ground truth via the brute-force oracle, parallel over queries.
/// Independent of any graph index.
pub fn generate_ground_truth(
    dataset: &Dataset,
    queries: &Dataset,
    constraints: &[Constraint],
    k: usize,
) -> Result<GroundTruth> {
    if queries.n() != constraints.len() {
        return Err(Error::parameter(format!(
            "{} queries but {} constraints",
            queries.n(),
            constraints.len()
        )));
    }
    if queries.n() > 0 && queries.d() != dataset.d() {
        return Err(Error::parameter(format!(
            "query dimension {} does not match dataset dimension {}",
            queries.d(),
            dataset.d()
        )));
    }
    if dataset.labels().len() != dataset.n() {
        return Err(Error::parameter("dataset has no labels attached"));
    }
    if k < 1 {
        return Err(Error::parameter("K must be >= 1"));
    }
    let rows: Vec<Vec<u32>> = (0..queries.n())
        .into_par_iter()
        .map(|j| brute_force_constrained(dataset, queries.row(j), &constraints[j], k).hit_ids())
        .collect();
    Ok(GroundTruth { rows, k })
}

/// Sidecar path convention: `<truth path>.json`.
pub fn sidecar_path(truth_path: &Path) -> PathBuf {
    let mut os = truth_path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Write the rows as ivecs plus the JSON sidecar.
pub fn save_ground_truth(
    truth: &GroundTruth,
    path: impl AsRef<Path>,
    sidecar: &GroundTruthSidecar,
) -> Result<()> {
    let path = path.as_ref();
    let rows: Vec<Vec<i32>> =
        truth.rows.iter().map(|r| r.iter().map(|&id| id as i32).collect()).collect();
    save_ivecs(&rows, path)?;
    let sidecar_file = sidecar_path(path);
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::format(format!("sidecar serialization failed: {e}")))?;
    std::fs::write(&sidecar_file, json).map_err(|e| Error::io(&sidecar_file, e))
}

/// Load rows and sidecar; ids must be non-negative.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<(GroundTruth, GroundTruthSidecar)> {
    let path = path.as_ref();
    let raw = load_ivecs(path)?;
    let mut rows = Vec::with_capacity(raw.len());
    for (j, row) in raw.into_iter().enumerate() {
        let mut ids = Vec::with_capacity(row.len());
        for v in row {
            if v < 0 {
                return Err(Error::format(format!(
                    "{}: row {j}: negative id {v}",
                    path.display()
                )));
            }
            ids.push(v as u32);
        }
        rows.push(ids);
    }
    let sidecar_file = sidecar_path(path);
    let json = std::fs::read_to_string(&sidecar_file)
        .map_err(|e| Error::io(&sidecar_file, e))?;
    let sidecar: GroundTruthSidecar = serde_json::from_str(&json)
        .map_err(|e| Error::format(format!("{}: {e}", sidecar_file.display())))?;
    Ok((GroundTruth { rows, k: sidecar.k }, sidecar))
}

/// Verify the sidecar's checksums against the actual query and constraint
/// files.
pub fn verify_sidecar(
    sidecar: &GroundTruthSidecar,
    query_path: impl AsRef<Path>,
    constraint_path: impl AsRef<Path>,
) -> Result<()> {
    let q = checksum_file(query_path)?;
    if q != sidecar.query_checksum {
        return Err(Error::ChecksumMismatch { stored: sidecar.query_checksum, provided: q });
    }
    let c = checksum_file(constraint_path)?;
    if c != sidecar.constraint_checksum {
        return Err(Error::ChecksumMismatch {
            stored: sidecar.constraint_checksum,
            provided: c,
        });
    }
    Ok(())
}

/// `|A ∩ B| / |B|` over result ids A and the true ids B, as sets. `None`
/// when the truth row is empty: such queries are reported as skipped, never
/// as recall 0 or 1.
pub fn recall(result_ids: &[u32], truth_row: &[u32]) -> Option<f64> {
    if truth_row.is_empty() {
        return None;
    }
    let truth: std::collections::HashSet<u32> = truth_row.iter().copied().collect();
    let mut seen = std::collections::HashSet::new();
    let hit = result_ids
        .iter()
        .filter(|id| truth.contains(id) && seen.insert(**id))
        .count();
    Some(hit as f64 / truth.len() as f64)
}

/// Queries per second of wall-clock search time.
pub fn qps(wall_time_secs: f64, num_queries: usize) -> f64 {
    assert!(wall_time_secs > 0.0, "qps needs a positive wall time");
    num_queries as f64 / wall_time_secs
}
