//! Seeded Gaussian-mixture data for tests and benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{euclidean, Dataset};

/// Draw `k` centers of dimension `d` with pairwise distance >= `min_sep`.
///
/// Centers are sampled uniformly from a hypercube and re-drawn until they
/// respect the separation, widening the cube if a draw keeps failing, so the
/// function terminates for any parameters.
pub fn separated_centers(k: usize, d: usize, min_sep: f32, rng: &mut ChaCha8Rng) -> Dataset {
    let mut scale = min_sep.max(1.0);
    loop {
        let mut centers: Vec<f32> = Vec::with_capacity(k * d);
        let mut ok = true;
        'outer: for i in 0..k {
            for _attempt in 0..200 {
                let candidate: Vec<f32> =
                    (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
                let far_enough = centers
                    .chunks_exact(d)
                    .all(|c| euclidean(c, &candidate) >= min_sep);
                if far_enough {
                    centers.extend_from_slice(&candidate);
                    break;
                }
                if _attempt == 199 {
                    ok = false;
                    break 'outer;
                }
            }
            let _ = i;
        }
        if ok {
            return Dataset::new(centers, d).expect("center matrix is well-formed");
        }
        scale *= 1.5;
    }
}

/// Sample `n` points around the given centers with isotropic Gaussian noise.
/// Each point picks its blob uniformly at random; returns the points and
/// their blob memberships.
pub fn blobs_around(
    centers: &Dataset,
    n: usize,
    std_dev: f32,
    seed: u64,
) -> (Dataset, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, d) = (centers.n(), centers.d());
    let noise = Normal::new(0.0f32, std_dev).expect("std_dev must be finite and non-negative");
    let mut vectors = Vec::with_capacity(n * d);
    let mut membership = Vec::with_capacity(n);
    for _ in 0..n {
        let blob = rng.gen_range(0..k);
        membership.push(blob as u32);
        let center = centers.row(blob);
        for j in 0..d {
            vectors.push(center[j] + noise.sample(&mut rng));
        }
    }
    (Dataset::new(vectors, d).expect("blob matrix is well-formed"), membership)
}

/// `n` points in `d` dimensions drawn from `k` Gaussian blobs whose centers
/// are at least `min_sep` apart. Returns (points, blob memberships, centers).
pub fn gaussian_blobs(
    n: usize,
    d: usize,
    k: usize,
    min_sep: f32,
    std_dev: f32,
    seed: u64,
) -> (Dataset, Vec<u32>, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = separated_centers(k, d, min_sep, &mut rng);
    let (points, membership) = blobs_around(&centers, n, std_dev, seed.wrapping_add(1));
    (points, membership, centers)
}
