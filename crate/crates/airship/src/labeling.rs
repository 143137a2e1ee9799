//! Cluster-label synthesis: k-means over the base vectors, then an optional
//! randomization pass that replaces each label with a uniform draw at a
//! configured probability.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};

/// Parameters for [`assign_cluster_labels`].
#[derive(Debug, Clone)]
pub struct LabelingConfig {
    /// Number of k-means clusters (= number of distinct labels).
    pub num_clusters: usize,
    /// Probability, in percent, that a vector's cluster label is replaced by
    /// a uniform random label.
    pub randomness_pct: u32,
    /// Fixed Lloyd iteration count.
    pub kmeans_iters: usize,
    pub rng_seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig { num_clusters: 10, randomness_pct: 0, kmeans_iters: 25, rng_seed: 0 }
    }
}

impl LabelingConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.num_clusters < 1 {
            return Err(Error::parameter("num_clusters must be >= 1"));
        }
        if self.randomness_pct > 100 {
            return Err(Error::parameter(format!(
                "randomness_pct {} out of range [0, 100]",
                self.randomness_pct
            )));
        }
        if n < self.num_clusters {
            return Err(Error::parameter(format!(
                "dataset has {n} vectors, fewer than {} clusters",
                self.num_clusters
            )));
        }
        Ok(())
    }
}

/// Label every vector with its k-means cluster id, then randomize a
/// `randomness_pct` fraction of labels. Deterministic for a fixed seed.
pub fn assign_cluster_labels(dataset: &Dataset, config: &LabelingConfig) -> Result<Vec<u32>> {
    assign_cluster_labels_with_centroids(dataset, config).map(|(labels, _)| labels)
}

/// Same as [`assign_cluster_labels`] but also returns the fitted centroids
/// as a `k x d` dataset, so query vectors can be labeled consistently with
/// the base vectors via [`assign_labels_from_centroids`].
pub fn assign_cluster_labels_with_centroids(
    dataset: &Dataset,
    config: &LabelingConfig,
) -> Result<(Vec<u32>, Dataset)> {
    config.validate(dataset.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let centroids = lloyd(dataset, config, &mut rng);
    let mut labels = nearest_centroid_labels(dataset, &centroids);
    randomize_labels(&mut labels, config.num_clusters, config.randomness_pct, &mut rng);
    Ok((labels, centroids))
}

/// Label vectors by nearest centroid (ties toward the lower centroid index),
/// then apply the same randomization pass as [`assign_cluster_labels`].
pub fn assign_labels_from_centroids(
    dataset: &Dataset,
    centroids: &Dataset,
    randomness_pct: u32,
    rng_seed: u64,
) -> Result<Vec<u32>> {
    if centroids.is_empty() {
        return Err(Error::parameter("centroid set is empty"));
    }
    if centroids.d() != dataset.d() {
        return Err(Error::parameter(format!(
            "centroid dimension {} does not match dataset dimension {}",
            centroids.d(),
            dataset.d()
        )));
    }
    if randomness_pct > 100 {
        return Err(Error::parameter(format!("randomness_pct {randomness_pct} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut labels = nearest_centroid_labels(dataset, centroids);
    randomize_labels(&mut labels, centroids.n(), randomness_pct, &mut rng);
    Ok(labels)
}

fn lloyd(dataset: &Dataset, config: &LabelingConfig, rng: &mut ChaCha8Rng) -> Dataset {
    let (n, d, k) = (dataset.n(), dataset.d(), config.num_clusters);
    // Seeded uniform point initialization: k distinct data points.
    let init = rand::seq::index::sample(rng, n, k);
    let mut centroids: Vec<f32> = Vec::with_capacity(k * d);
    for idx in init.iter() {
        centroids.extend_from_slice(dataset.row(idx));
    }

    let mut assignment = vec![0u32; n];
    for _ in 0..config.kmeans_iters {
        assign_rows(dataset, &centroids, d, &mut assignment);
        repair_empty_clusters(dataset, &centroids, k, &mut assignment);

        // Recompute means sequentially in vector order so float accumulation
        // is reproducible.
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            let c = c as usize;
            counts[c] += 1;
            for (j, v) in dataset.row(i).iter().enumerate() {
                sums[c * d + j] += f64::from(*v);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue; // unreachable after repair; keep the old centroid
            }
            for j in 0..d {
                centroids[c * d + j] = (sums[c * d + j] / counts[c] as f64) as f32;
            }
        }
    }
    Dataset::new(centroids, d).expect("centroid matrix is well-formed")
}

fn assign_rows(dataset: &Dataset, centroids: &[f32], d: usize, assignment: &mut [u32]) {
    assignment.par_iter_mut().enumerate().for_each(|(i, slot)| {
        *slot = nearest_centroid(dataset.row(i), centroids, d);
    });
}

/// Index of the closest centroid; strict `<` keeps the lowest index on ties.
fn nearest_centroid(row: &[f32], centroids: &[f32], d: usize) -> u32 {
    let mut best = 0u32;
    let mut best_dist = f32::INFINITY;
    for (c, centroid) in centroids.chunks_exact(d).enumerate() {
        let dist = euclidean(row, centroid);
        if dist < best_dist {
            best_dist = dist;
            best = c as u32;
        }
    }
    best
}

fn nearest_centroid_labels(dataset: &Dataset, centroids: &Dataset) -> Vec<u32> {
    let d = dataset.d();
    let mut labels = vec![0u32; dataset.n()];
    labels.par_iter_mut().enumerate().for_each(|(i, slot)| {
        *slot = nearest_centroid(dataset.row(i), centroids.vectors(), d);
    });
    labels
}

/// Give each empty cluster the member of the largest cluster that lies
/// farthest from that cluster's centroid.
fn repair_empty_clusters(
    dataset: &Dataset,
    centroids: &[f32],
    k: usize,
    assignment: &mut [u32],
) {
    let d = dataset.d();
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c as usize] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let largest = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap();
        if counts[largest] <= 1 {
            continue; // nothing left to donate
        }
        let centroid = &centroids[largest * d..(largest + 1) * d];
        let mut farthest = None;
        let mut farthest_dist = -1.0f32;
        for (i, &c) in assignment.iter().enumerate() {
            if c as usize == largest {
                let dist = euclidean(dataset.row(i), centroid);
                if dist > farthest_dist {
                    farthest_dist = dist;
                    farthest = Some(i);
                }
            }
        }
        let donor = farthest.expect("largest cluster has members");
        assignment[donor] = empty as u32;
        counts[largest] -= 1;
        counts[empty] += 1;
    }
}

fn randomize_labels(labels: &mut [u32], k: usize, randomness_pct: u32, rng: &mut ChaCha8Rng) {
    if randomness_pct == 0 {
        return;
    }
    let threshold = f64::from(randomness_pct) / 100.0;
    for label in labels.iter_mut() {
        if rng.gen::<f64>() < threshold {
            *label = rng.gen_range(0..k) as u32;
        }
    }
}
