//! Proximity-graph index: construction, per-vertex k-NN lookup, and the
//! binary index format.
//!
//! The graph is a single-layer navigable graph built by incremental
//! insertion. Every adjacency list is kept sorted ascending by distance to
//! the owning vertex, which is what lets the alter-ratio estimator read a
//! vertex's approximate k nearest neighbors straight off the first k edges
//! with no distance computations at query time. A uniform sample of vertex
//! ids is drawn at build time and stored in the index so constrained
//! searches can pick starting points with a single O(s) scan.
//!
//! # Index file format
//!
//! All integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "AIRSHIPG"
//! 8       4     format version (u32, currently 1)
//! 12      8     n, number of vertices (u64)
//! 20      4     vector dimension d (u32)
//! 24      4     max_degree (u32)
//! 28      4     ef_construction (u32)
//! 32      8     sample length s (u64)
//! 40      8     build RNG seed (u64)
//! 48      8     dataset checksum (u64)
//! 56      -     n adjacency lists: u32 length, then that many u32 ids
//! then    -     s sample ids (u32 each)
//! ```
//!
//! Trailing bytes after the sample are a format error.

use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::candidate::Candidate;
use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AIRSHIPG";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

/// Construction parameters.
#[derive(Debug, Clone)]
pub struct BuildParams {
    /// Cap on adjacency-list length.
    pub max_degree: usize,
    /// Candidate-pool size for the insertion search.
    pub ef_construction: usize,
    /// Number of vertex ids sampled (without replacement) into the index.
    pub sample_size: usize,
    pub rng_seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams { max_degree: 16, ef_construction: 128, sample_size: 1000, rng_seed: 0 }
    }
}

impl BuildParams {
    fn validate(&self) -> Result<()> {
        if self.max_degree < 2 {
            return Err(Error::parameter("max_degree must be >= 2"));
        }
        if self.ef_construction < self.max_degree {
            return Err(Error::parameter("ef_construction must be >= max_degree"));
        }
        if self.sample_size < 1 {
            return Err(Error::parameter("sample_size must be >= 1"));
        }
        Ok(())
    }
}

/// Provenance recorded in the index file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildMeta {
    pub dataset_checksum: u64,
    pub rng_seed: u64,
    pub max_degree: u32,
    pub ef_construction: u32,
}

/// Immutable single-layer proximity graph plus its stored starting-point
/// sample. Safe to share read-only across query threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    adjacency: Vec<Vec<u32>>,
    sample: Vec<u32>,
    d: u32,
    meta: BuildMeta,
}

impl ProximityGraph {
    /// Build the index by incremental insertion: each new vertex runs an
    /// unconstrained best-first search over the partial graph to collect
    /// `ef_construction` candidates, links to its `max_degree` nearest, and
    /// adds reciprocal edges, pruning any list that overflows by dropping
    /// the farthest entry.
    pub fn build(dataset: &Dataset, params: &BuildParams) -> Result<Self> {
        params.validate()?;
        let n = dataset.n();
        if n < 2 {
            return Err(Error::parameter(format!("cannot build a graph over {n} vectors")));
        }

        let mut adj: Vec<Vec<Candidate>> = vec![Vec::new(); n];
        let mut seen_at = vec![0u64; n]; // search stamp, avoids clearing per search
        // Entry probes for the candidate search. A single fixed entry point
        // cannot escape its own cluster on strongly clustered data, which
        // orphans whole regions of the graph; random probes keep every
        // region reachable.
        let mut probe_rng =
            ChaCha8Rng::seed_from_u64(params.rng_seed ^ 0x9e37_79b9_7f4a_7c15);

        // Pass 1: incremental insertion.
        for i in 1..n {
            let mut entries: Vec<u32> = vec![0];
            for _ in 0..ENTRY_PROBES.min(i) {
                entries.push(probe_rng.gen_range(0..i) as u32);
            }
            entries.sort_unstable();
            entries.dedup();
            let candidates = insert_candidates(
                dataset,
                &adj,
                i,
                &entries,
                params.ef_construction,
                i as u64,
                &mut seen_at,
            );
            link(&mut adj, i, &candidates, params.max_degree);
        }

        // Pass 2: re-run the candidate search for every vertex over the
        // completed graph and re-link. A vertex whose insertion search never
        // reached its own region now has fresh probes and a fully built
        // neighborhood to find it with.
        for i in 0..n {
            let mut entries: Vec<u32> = adj[i].iter().map(|c| c.id).collect();
            for _ in 0..ENTRY_PROBES {
                let p = probe_rng.gen_range(0..n) as u32;
                if p as usize != i {
                    entries.push(p);
                }
            }
            entries.sort_unstable();
            entries.dedup();
            let candidates = insert_candidates(
                dataset,
                &adj,
                i,
                &entries,
                params.ef_construction,
                (n + i) as u64,
                &mut seen_at,
            );
            adj[i].clear();
            link(&mut adj, i, &candidates, params.max_degree);
        }

        // Pass 3: traversal follows out-edges only, so a vertex whose
        // reciprocal edges were all pruned away is invisible to every
        // search. Give each such vertex an in-edge from its nearest
        // out-neighbor.
        repair_in_degrees(&mut adj, params.max_degree);

        // Pass 4: nearest-neighbor pruning can sever the last links between
        // well-separated clusters, leaving searches stuck in whatever region
        // they started in. Link the strongly-connected components into a
        // cycle through closest vertex pairs, which makes the whole graph
        // strongly connected.
        link_strongly_connected(dataset, &mut adj, params.max_degree);

        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let sample_len = params.sample_size.min(n);
        let sample: Vec<u32> =
            rand::seq::index::sample(&mut rng, n, sample_len).iter().map(|i| i as u32).collect();

        Ok(ProximityGraph {
            adjacency: adj
                .into_iter()
                .map(|list| list.into_iter().map(|c| c.id).collect())
                .collect(),
            sample,
            d: dataset.d() as u32,
            meta: BuildMeta {
                dataset_checksum: dataset.checksum(),
                rng_seed: params.rng_seed,
                max_degree: params.max_degree as u32,
                ef_construction: params.ef_construction as u32,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    /// Neighbor ids of `v`, sorted ascending by distance to `v`.
    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adjacency[v as usize]
    }

    /// First `min(k, degree(v))` neighbors of `v`. The sorted-adjacency
    /// invariant makes this the approximate k-NN of `v`, read off with no
    /// distance computation.
    pub fn knn_of_vertex(&self, v: u32, k: usize) -> &[u32] {
        let list = self.neighbors(v);
        &list[..k.min(list.len())]
    }

    /// Vertex ids sampled uniformly without replacement at build time.
    pub fn sample(&self) -> &[u32] {
        &self.sample
    }

    pub fn meta(&self) -> &BuildMeta {
        &self.meta
    }

    pub fn max_degree(&self) -> usize {
        self.meta.max_degree as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let adjacency_len: usize = self.adjacency.iter().map(|l| 4 + l.len() * 4).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + adjacency_len + self.sample.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.adjacency.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        out.extend_from_slice(&self.meta.max_degree.to_le_bytes());
        out.extend_from_slice(&self.meta.ef_construction.to_le_bytes());
        out.extend_from_slice(&(self.sample.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.meta.rng_seed.to_le_bytes());
        out.extend_from_slice(&self.meta.dataset_checksum.to_le_bytes());
        for list in &self.adjacency {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for id in list {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        for id in &self.sample {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    /// Parse an index file. When `expected_checksum` is given it is compared
    /// against the dataset checksum recorded at build time.
    pub fn from_index_bytes(bytes: &[u8], expected_checksum: Option<u64>) -> Result<Self> {
        let mut cur = Cursor { bytes, offset: 0 };
        let magic = cur.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::format("bad magic: not an index file"));
        }
        let version = cur.read_u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let n = cur.read_u64("vertex count")?;
        let d = cur.read_u32("dimension")?;
        let max_degree = cur.read_u32("max_degree")?;
        let ef_construction = cur.read_u32("ef_construction")?;
        let sample_len = cur.read_u64("sample length")?;
        let rng_seed = cur.read_u64("rng seed")?;
        let dataset_checksum = cur.read_u64("dataset checksum")?;

        if n < 2 || d == 0 {
            return Err(Error::format(format!("degenerate index header: n={n}, d={d}")));
        }
        if max_degree < 2 {
            return Err(Error::format(format!("corrupt header: max_degree {max_degree}")));
        }
        // Every vertex needs at least a 4-byte list length; reject absurd
        // counts before allocating anything.
        let remaining = (bytes.len() - cur.offset) as u64;
        if n > remaining / 4 || sample_len > n {
            return Err(Error::format(format!(
                "corrupt header: n={n}, sample={sample_len} cannot fit in {remaining} bytes"
            )));
        }

        let mut adjacency = Vec::with_capacity(n as usize);
        for v in 0..n {
            let len = cur.read_u32(&format!("adjacency length of vertex {v}"))? as u64;
            if len > u64::from(max_degree) {
                return Err(Error::format(format!(
                    "vertex {v}: adjacency length {len} exceeds max_degree {max_degree}"
                )));
            }
            let raw = cur.take(len as usize * 4, &format!("adjacency of vertex {v}"))?;
            let mut list = Vec::with_capacity(len as usize);
            for chunk in raw.chunks_exact(4) {
                let id = u32::from_le_bytes(chunk.try_into().unwrap());
                if u64::from(id) >= n || u64::from(id) == v {
                    return Err(Error::format(format!(
                        "vertex {v}: invalid neighbor id {id}"
                    )));
                }
                list.push(id);
            }
            adjacency.push(list);
        }

        let raw = cur.take(sample_len as usize * 4, "sample ids")?;
        let mut sample = Vec::with_capacity(sample_len as usize);
        for chunk in raw.chunks_exact(4) {
            let id = u32::from_le_bytes(chunk.try_into().unwrap());
            if u64::from(id) >= n {
                return Err(Error::format(format!("sample id {id} out of range")));
            }
            sample.push(id);
        }
        let mut dedup = sample.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != sample.len() {
            return Err(Error::format("sample contains duplicate ids"));
        }

        if cur.offset != bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after the sample block",
                bytes.len() - cur.offset
            )));
        }

        if let Some(provided) = expected_checksum {
            if provided != dataset_checksum {
                return Err(Error::ChecksumMismatch {
                    stored: dataset_checksum,
                    provided,
                });
            }
        }

        Ok(ProximityGraph {
            adjacency,
            sample,
            d,
            meta: BuildMeta { dataset_checksum, rng_seed, max_degree, ef_construction },
        })
    }

    /// Assemble a graph from raw parts, bypassing construction. Test-only:
    /// invariants are the caller's problem.
    #[cfg(test)]
    pub(crate) fn from_parts_for_tests(
        adjacency: Vec<Vec<u32>>,
        sample: Vec<u32>,
        d: u32,
        max_degree: u32,
    ) -> Self {
        ProximityGraph {
            adjacency,
            sample,
            d,
            meta: BuildMeta {
                dataset_checksum: 0,
                rng_seed: 0,
                max_degree,
                ef_construction: max_degree,
            },
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected_checksum: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_index_bytes(&bytes, expected_checksum).map_err(|e| match e {
            Error::Format(detail) => Error::Format(format!("{}: {detail}", path.display())),
            other => other,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let avail = self.bytes.len() - self.offset;
        if avail < len {
            return Err(Error::format(format!(
                "truncated index: need {len} bytes for {what} at byte offset {}, found {avail}",
                self.offset
            )));
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn read_u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

const ENTRY_PROBES: usize = 64;

/// Collect up to `ef` nearest candidates for `vertex` by a best-first search
/// over the current graph, entered at the given probes. `vertex` itself
/// never enters the pool.
fn insert_candidates(
    dataset: &Dataset,
    adj: &[Vec<Candidate>],
    vertex: usize,
    entries: &[u32],
    ef: usize,
    stamp: u64,
    seen_at: &mut [u64],
) -> Vec<Candidate> {
    let query = dataset.row(vertex);
    let mut frontier: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::new();
    let mut pool: BinaryHeap<Candidate> = BinaryHeap::new(); // max-heap, capped at ef

    seen_at[vertex] = stamp;
    for &id in entries {
        if seen_at[id as usize] == stamp {
            continue;
        }
        seen_at[id as usize] = stamp;
        let entry = Candidate { dist: euclidean(query, dataset.row(id as usize)), id };
        frontier.push(std::cmp::Reverse(entry));
        pool.push(entry);
        if pool.len() > ef {
            pool.pop();
        }
    }

    while let Some(std::cmp::Reverse(current)) = frontier.pop() {
        if pool.len() == ef && current.dist > pool.peek().unwrap().dist {
            break;
        }
        for &Candidate { id: next, .. } in &adj[current.id as usize] {
            if seen_at[next as usize] == stamp {
                continue;
            }
            seen_at[next as usize] = stamp;
            let cand = Candidate { dist: euclidean(query, dataset.row(next as usize)), id: next };
            if pool.len() < ef || cand.dist < pool.peek().unwrap().dist {
                frontier.push(std::cmp::Reverse(cand));
                pool.push(cand);
                if pool.len() > ef {
                    pool.pop();
                }
            }
        }
    }
    pool.into_sorted_vec()
}

/// Make the graph strongly connected. Computes the strongly-connected
/// components and, while more than one exists, links consecutive components
/// (ordered by smallest member id) into a cycle through their closest vertex
/// pairs. Edges added by this pass are never dropped by it.
fn link_strongly_connected(dataset: &Dataset, adj: &mut [Vec<Candidate>], max_degree: usize) {
    let mut forced: Vec<(u32, u32)> = Vec::new();
    loop {
        let components = strongly_connected_components(adj);
        if components.len() <= 1 {
            return;
        }
        for pair in 0..components.len() {
            let from = &components[pair];
            let to = &components[(pair + 1) % components.len()];
            let mut best = Candidate { dist: f32::INFINITY, id: 0 };
            let mut best_u = 0u32;
            for &u in from {
                for &v in to {
                    let dist = euclidean(dataset.row(u as usize), dataset.row(v as usize));
                    let cand = Candidate { dist, id: v };
                    if (cand, u) < (best, best_u) {
                        best = cand;
                        best_u = u;
                    }
                }
            }
            forced.push((best_u, best.id));
            force_edge_protected(
                &mut adj[best_u as usize],
                best,
                max_degree,
                |id| forced.iter().any(|&(f, t)| f == best_u && t == id),
            );
        }
    }
}

/// Strongly-connected components via iterative Tarjan, each sorted
/// ascending, ordered by smallest member.
fn strongly_connected_components(adj: &[Vec<Candidate>]) -> Vec<Vec<u32>> {
    let n = adj.len();
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut next_index = 0u32;
    let mut components: Vec<Vec<u32>> = Vec::new();
    // explicit DFS frames: (vertex, next edge position)
    let mut frames: Vec<(u32, usize)> = Vec::new();

    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        frames.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut edge)) = frames.last_mut() {
            if let Some(c) = adj[v as usize].get(*edge) {
                *edge += 1;
                let w = c.id;
                if index[w as usize] == UNSET {
                    index[w as usize] = next_index;
                    low[w as usize] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    frames.push((w, 0));
                } else if on_stack[w as usize] {
                    low[v as usize] = low[v as usize].min(index[w as usize]);
                }
            } else {
                frames.pop();
                if let Some(&mut (parent, _)) = frames.last_mut() {
                    low[parent as usize] = low[parent as usize].min(low[v as usize]);
                }
                if low[v as usize] == index[v as usize] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w as usize] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
            }
        }
    }
    components.sort_by_key(|c| c[0]);
    components
}

/// Force an in-edge onto every vertex with in-degree zero, from its nearest
/// out-neighbor whose list can spare an entry without zeroing someone else's
/// in-degree.
fn repair_in_degrees(adj: &mut [Vec<Candidate>], max_degree: usize) {
    let n = adj.len();
    let mut in_degree = vec![0u32; n];
    for list in adj.iter() {
        for c in list {
            in_degree[c.id as usize] += 1;
        }
    }
    for v in 0..n {
        if in_degree[v] > 0 {
            continue;
        }
        for i in 0..adj[v].len() {
            let Candidate { dist, id } = adj[v][i];
            let host = id as usize;
            if adj[host].len() >= max_degree {
                let victim = adj[host].last().unwrap().id as usize;
                if in_degree[victim] <= 1 {
                    continue; // dropping it would just move the orphan
                }
                adj[host].pop();
                in_degree[victim] -= 1;
            }
            let cand = Candidate { dist, id: v as u32 };
            let pos = adj[host].partition_point(|c| *c < cand);
            adj[host].insert(pos, cand);
            in_degree[v] += 1;
            break;
        }
    }
}

/// Insert keeping sort order; on overflow drop the farthest entry that is
/// neither the one just inserted nor protected.
fn force_edge_protected(
    list: &mut Vec<Candidate>,
    cand: Candidate,
    max_degree: usize,
    protected: impl Fn(u32) -> bool,
) {
    if list.iter().any(|c| c.id == cand.id) {
        return;
    }
    let pos = list.partition_point(|c| *c < cand);
    list.insert(pos, cand);
    if list.len() > max_degree {
        let drop_at = list
            .iter()
            .enumerate()
            .rev()
            .find(|(i, c)| *i != pos && !protected(c.id))
            .map(|(i, _)| i);
        if let Some(i) = drop_at {
            list.remove(i);
        } else {
            // every other entry is protected; sacrifice the farthest
            list.pop();
        }
    }
}

/// Point `vertex` at its `max_degree` nearest candidates and add reciprocal
/// edges, pruning any overfull list by dropping its farthest entry.
fn link(adj: &mut [Vec<Candidate>], vertex: usize, candidates: &[Candidate], max_degree: usize) {
    let keep = candidates.len().min(max_degree);
    adj[vertex] = candidates[..keep].to_vec();
    for &Candidate { dist, id } in &adj[vertex].to_vec() {
        push_sorted(&mut adj[id as usize], Candidate { dist, id: vertex as u32 });
        if adj[id as usize].len() > max_degree {
            adj[id as usize].pop();
        }
    }
}

/// Insert while keeping the list sorted by (distance, id). Ignores an id
/// already present.
fn push_sorted(list: &mut Vec<Candidate>, cand: Candidate) {
    if list.iter().any(|c| c.id == cand.id) {
        return;
    }
    let pos = list.partition_point(|c| *c < cand);
    list.insert(pos, cand);
}
