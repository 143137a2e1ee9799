//! Constrained best-first search over the proximity graph.
//!
//! Four variants share one traversal skeleton:
//!
//! * `vanilla` — single candidate queue seeded with one random vertex; a
//!   popped vertex enters the result heap only if it satisfies the
//!   constraint.
//! * `start` — same loop, but seeded with every sampled vertex that
//!   satisfies the constraint, so the search begins inside the satisfied
//!   regions.
//! * `alter` — two candidate queues, one for satisfied and one for
//!   unsatisfied frontier vertices. Each iteration picks a queue so that the
//!   fraction of satisfied pops tracks `alter_ratio`: popping satisfied
//!   candidates exploits their clustering, popping unsatisfied ones keeps
//!   exploring toward the query.
//! * `alter_prefer` — `alter` plus an override: whenever the best satisfied
//!   candidate is at least as close as the best unsatisfied one, take it
//!   regardless of the ratio.
//!
//! The ratio itself can be fixed or estimated per query from graph-neighbor
//! statistics: the mean fraction of each satisfied starting point's nearest
//! stored edges that also satisfy the constraint. Sorted adjacency makes
//! that estimate free of distance computations.

use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::candidate::Candidate;
use crate::constraints::Constraint;
use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::graph::ProximityGraph;

/// Lower clamp for the estimated alter ratio. A raw estimate of exactly 0
/// would make the ratio rule never select the satisfied queue once a single
/// unsatisfied pop happened, starving the queue the search is built around.
pub const ALTER_RATIO_FLOOR: f32 = 0.05;

/// Default number of stored edges inspected per starting point when
/// estimating the alter ratio.
pub const DEFAULT_ESTIMATOR_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Vanilla,
    Start,
    Alter,
    AlterPrefer,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Start => "start",
            Variant::Alter => "alter",
            Variant::AlterPrefer => "alter_prefer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "start" => Ok(Variant::Start),
            "alter" => Ok(Variant::Alter),
            "alter_prefer" => Ok(Variant::AlterPrefer),
            other => Err(Error::parameter(format!(
                "unknown variant {other:?} (expected vanilla, start, alter, alter_prefer)"
            ))),
        }
    }
}

/// How the dual-queue variants obtain their alter ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlterRatio {
    /// Use this value, in (0, 1].
    Fixed(f32),
    /// Estimate per query from the satisfied starting points' stored edges.
    Estimated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    /// Result count K.
    pub k: usize,
    pub variant: Variant,
    pub alter_ratio: AlterRatio,
    /// Stored edges inspected per starting point by the ratio estimator.
    pub estimator_k: usize,
    /// Pop budget; 0 means unbounded.
    pub max_visit: usize,
    /// Seeds the random starting point of the `vanilla` variant.
    pub rng_seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            k: 10,
            variant: Variant::AlterPrefer,
            alter_ratio: AlterRatio::Estimated,
            estimator_k: DEFAULT_ESTIMATOR_K,
            max_visit: 0,
            rng_seed: 0,
        }
    }
}

impl SearchParams {
    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::parameter("K must be >= 1"));
        }
        if self.estimator_k < 1 {
            return Err(Error::parameter("estimator_k must be >= 1"));
        }
        if let AlterRatio::Fixed(r) = self.alter_ratio {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::parameter(format!("alter_ratio {r} out of range (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Why a search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// K results held and the popped candidate was worse than all of them.
    Convergence,
    /// Every reachable candidate was popped.
    Exhaustion,
    /// The `max_visit` pop budget ran out.
    Budget,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Convergence => "convergence",
            Termination::Exhaustion => "exhaustion",
            Termination::Budget => "budget",
        }
    }
}

/// Traversal counters. `vertices_popped` counts completed pop iterations and
/// `satisfied_popped` the subset that came from satisfied vertices; the
/// dual-queue scheduler reads them as `cnt_total` and `cnt_sat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchStats {
    pub distance_computations: u64,
    pub vertices_popped: u64,
    pub satisfied_popped: u64,
    pub terminated_by: Termination,
}

/// Top-K hits, ascending by distance, plus traversal statistics. Every hit
/// satisfies the query constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<(u32, f32)>,
    pub stats: SearchStats,
}

impl SearchResult {
    pub fn hit_ids(&self) -> Vec<u32> {
        self.hits.iter().map(|&(id, _)| id).collect()
    }
}

/// Which candidate queue the scheduler picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueChoice {
    Sat,
    Other,
}

/// Pick the queue for the next pop.
///
/// Branch order: an empty queue forces the other one; with `prefer` set, a
/// satisfied-best candidate at least as close as the unsatisfied-best wins
/// outright; otherwise the satisfied queue is selected exactly while
/// `cnt_sat / cnt_total <= alter_ratio` (an untouched counter pair selects
/// it too). Calling this with both queues empty is a contract violation.
pub fn select_priority_queue(
    min_sat: Option<f32>,
    min_other: Option<f32>,
    cnt_sat: u64,
    cnt_total: u64,
    alter_ratio: f32,
    prefer: bool,
) -> QueueChoice {
    match (min_sat, min_other) {
        (_, None) => {
            assert!(min_sat.is_some(), "select_priority_queue called with both queues empty");
            QueueChoice::Sat
        }
        (None, Some(_)) => QueueChoice::Other,
        (Some(sat), Some(other)) => {
            if prefer && sat <= other {
                QueueChoice::Sat
            } else if cnt_total == 0
                || cnt_sat as f64 / cnt_total as f64 <= f64::from(alter_ratio)
            {
                QueueChoice::Sat
            } else {
                QueueChoice::Other
            }
        }
    }
}

/// All ids whose label satisfies the constraint, in id order. No distance
/// computation is performed.
pub fn linear_scan_filter(dataset: &Dataset, constraint: &Constraint) -> Vec<u32> {
    dataset
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &label)| constraint.evaluate(label))
        .map(|(i, _)| i as u32)
        .collect()
}

/// The stored sample ids that satisfy the constraint: an O(s) scan, no
/// distance computations.
pub fn sample_starting_points(
    graph: &ProximityGraph,
    dataset: &Dataset,
    constraint: &Constraint,
) -> Vec<u32> {
    satisfied_sample(graph, dataset.labels(), constraint)
}

/// Label-only form of [`sample_starting_points`], for callers that have no
/// vector data loaded.
pub fn satisfied_sample(
    graph: &ProximityGraph,
    labels: &[u32],
    constraint: &Constraint,
) -> Vec<u32> {
    graph
        .sample()
        .iter()
        .copied()
        .filter(|&id| constraint.evaluate(labels[id as usize]))
        .collect()
}

/// Exact constrained top-K by Euclidean distance, ties broken by lower id.
/// This is the ground-truth oracle: only satisfied vectors get a distance
/// computation.
pub fn brute_force_constrained(
    dataset: &Dataset,
    query: &[f32],
    constraint: &Constraint,
    k: usize,
) -> SearchResult {
    let labels = dataset.labels();
    let mut topk = TopK::new(k);
    let mut dist_comps = 0u64;
    for (i, &label) in labels.iter().enumerate() {
        if !constraint.evaluate(label) {
            continue;
        }
        dist_comps += 1;
        topk.offer(Candidate { dist: euclidean(query, dataset.row(i)), id: i as u32 });
    }
    SearchResult {
        hits: topk.into_hits(),
        stats: SearchStats {
            distance_computations: dist_comps,
            vertices_popped: 0,
            satisfied_popped: 0,
            terminated_by: Termination::Exhaustion,
        },
    }
}

/// Estimate the alter ratio from graph-neighbor statistics: the mean, over
/// the satisfied starting points, of the fraction of each one's first
/// `estimator_k` stored edges that satisfy the constraint. Vertices with
/// degree below `estimator_k` divide by their degree instead. The result is
/// clamped to [`ALTER_RATIO_FLOOR`]. Zero distance computations.
pub fn estimate_alter_ratio(
    graph: &ProximityGraph,
    labels: &[u32],
    constraint: &Constraint,
    starts: &[u32],
    estimator_k: usize,
) -> f32 {
    assert!(!starts.is_empty(), "estimate_alter_ratio needs at least one satisfied start");
    let mut sum = 0.0f64;
    let mut counted = 0usize;
    for &v in starts {
        let neighbors = graph.knn_of_vertex(v, estimator_k);
        if neighbors.is_empty() {
            continue;
        }
        let satisfied =
            neighbors.iter().filter(|&&u| constraint.evaluate(labels[u as usize])).count();
        sum += satisfied as f64 / neighbors.len() as f64;
        counted += 1;
    }
    let raw = if counted == 0 { 0.0 } else { sum / counted as f64 };
    (raw as f32).max(ALTER_RATIO_FLOOR)
}

/// Dispatch on `params.variant`.
pub fn search(
    graph: &ProximityGraph,
    dataset: &Dataset,
    query: &[f32],
    constraint: &Constraint,
    params: &SearchParams,
) -> Result<SearchResult> {
    match params.variant {
        Variant::Vanilla | Variant::Start => vanilla_search(graph, dataset, query, constraint, params),
        Variant::Alter | Variant::AlterPrefer => {
            airship_search(graph, dataset, query, constraint, params)
        }
    }
}

/// Single-queue constrained best-first search (variants `vanilla` and
/// `start`).
pub fn vanilla_search(
    graph: &ProximityGraph,
    dataset: &Dataset,
    query: &[f32],
    constraint: &Constraint,
    params: &SearchParams,
) -> Result<SearchResult> {
    params.validate()?;
    check_inputs(graph, dataset, query)?;
    let labels = dataset.labels();

    let starts = match params.variant {
        Variant::Vanilla => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
            vec![rng.gen_range(0..graph.n()) as u32]
        }
        Variant::Start => match resolve_starting_points(graph, dataset, query, constraint, params.k) {
            Starts::Seeds(ids) => ids,
            Starts::Answered(result) => return Ok(result),
        },
        _ => {
            return Err(Error::parameter(
                "vanilla_search handles only the vanilla and start variants",
            ))
        }
    };

    let mut visited = vec![false; graph.n()];
    let mut frontier: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::new();
    let mut topk = TopK::new(params.k);
    let mut stats = SearchStats {
        distance_computations: 0,
        vertices_popped: 0,
        satisfied_popped: 0,
        terminated_by: Termination::Exhaustion,
    };

    for id in starts {
        visited[id as usize] = true;
        stats.distance_computations += 1;
        frontier.push(std::cmp::Reverse(Candidate {
            dist: euclidean(query, dataset.row(id as usize)),
            id,
        }));
    }

    loop {
        if params.max_visit > 0 && stats.vertices_popped >= params.max_visit as u64 {
            stats.terminated_by = Termination::Budget;
            break;
        }
        let Some(std::cmp::Reverse(current)) = frontier.pop() else {
            stats.terminated_by = Termination::Exhaustion;
            break;
        };
        stats.vertices_popped += 1;
        if topk.is_full() && current.dist > topk.worst_dist() {
            stats.terminated_by = Termination::Convergence;
            break;
        }
        if constraint.evaluate(labels[current.id as usize]) {
            stats.satisfied_popped += 1;
            topk.offer(current);
        }
        for &next in graph.neighbors(current.id) {
            if visited[next as usize] {
                continue;
            }
            visited[next as usize] = true;
            stats.distance_computations += 1;
            frontier.push(std::cmp::Reverse(Candidate {
                dist: euclidean(query, dataset.row(next as usize)),
                id: next,
            }));
        }
    }

    Ok(SearchResult { hits: topk.into_hits(), stats })
}

/// Dual-queue constrained search (variants `alter` and `alter_prefer`).
pub fn airship_search(
    graph: &ProximityGraph,
    dataset: &Dataset,
    query: &[f32],
    constraint: &Constraint,
    params: &SearchParams,
) -> Result<SearchResult> {
    params.validate()?;
    check_inputs(graph, dataset, query)?;
    let prefer = match params.variant {
        Variant::Alter => false,
        Variant::AlterPrefer => true,
        _ => {
            return Err(Error::parameter(
                "airship_search handles only the alter and alter_prefer variants",
            ))
        }
    };
    let labels = dataset.labels();

    let starts = match resolve_starting_points(graph, dataset, query, constraint, params.k) {
        Starts::Seeds(ids) => ids,
        Starts::Answered(result) => return Ok(result),
    };
    let alter_ratio = match params.alter_ratio {
        AlterRatio::Fixed(r) => r,
        AlterRatio::Estimated => {
            estimate_alter_ratio(graph, labels, constraint, &starts, params.estimator_k)
        }
    };

    let mut visited = vec![false; graph.n()];
    let mut pq_sat: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::new();
    let mut pq_other: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::new();
    let mut topk = TopK::new(params.k);
    let mut stats = SearchStats {
        distance_computations: 0,
        vertices_popped: 0,
        satisfied_popped: 0,
        terminated_by: Termination::Exhaustion,
    };

    // Starting points are satisfied by construction and enter pq_sat with
    // their distances computed.
    for id in starts {
        visited[id as usize] = true;
        stats.distance_computations += 1;
        pq_sat.push(std::cmp::Reverse(Candidate {
            dist: euclidean(query, dataset.row(id as usize)),
            id,
        }));
    }

    // cnt_sat / cnt_total in the scheduler's terms
    let (mut cnt_sat, mut cnt_total) = (0u64, 0u64);

    while !(pq_sat.is_empty() && pq_other.is_empty()) {
        if params.max_visit > 0 && cnt_total >= params.max_visit as u64 {
            stats.terminated_by = Termination::Budget;
            break;
        }
        let choice = select_priority_queue(
            pq_sat.peek().map(|c| c.0.dist),
            pq_other.peek().map(|c| c.0.dist),
            cnt_sat,
            cnt_total,
            alter_ratio,
            prefer,
        );
        let current = match choice {
            QueueChoice::Sat => {
                cnt_sat += 1;
                pq_sat.pop().expect("scheduler picked a non-empty queue").0
            }
            QueueChoice::Other => pq_other.pop().expect("scheduler picked a non-empty queue").0,
        };
        cnt_total += 1;
        debug_assert_eq!(
            constraint.evaluate(labels[current.id as usize]),
            choice == QueueChoice::Sat,
            "queue routing violated for vertex {}",
            current.id
        );

        if topk.is_full() && current.dist > topk.worst_dist() {
            stats.terminated_by = Termination::Convergence;
            break;
        }
        if choice == QueueChoice::Sat {
            topk.offer(current);
        }
        for &next in graph.neighbors(current.id) {
            if visited[next as usize] {
                continue;
            }
            visited[next as usize] = true;
            stats.distance_computations += 1;
            let cand =
                Candidate { dist: euclidean(query, dataset.row(next as usize)), id: next };
            if constraint.evaluate(labels[next as usize]) {
                pq_sat.push(std::cmp::Reverse(cand));
            } else {
                pq_other.push(std::cmp::Reverse(cand));
            }
        }
    }

    stats.vertices_popped = cnt_total;
    stats.satisfied_popped = cnt_sat;
    Ok(SearchResult { hits: topk.into_hits(), stats })
}

enum Starts {
    /// Graph traversal proceeds from these satisfied vertices.
    Seeds(Vec<u32>),
    /// The fallback already produced the final result.
    Answered(SearchResult),
}

/// Starting points with the sparse-constraint fallback: when no sampled
/// vertex satisfies the constraint, fall back to a linear scan over all
/// labels; if even that yields fewer than K satisfied vectors, rank them
/// directly by brute force and answer without touching the graph.
fn resolve_starting_points(
    graph: &ProximityGraph,
    dataset: &Dataset,
    query: &[f32],
    constraint: &Constraint,
    k: usize,
) -> Starts {
    let from_sample = sample_starting_points(graph, dataset, constraint);
    if !from_sample.is_empty() {
        return Starts::Seeds(from_sample);
    }
    let all_satisfied = linear_scan_filter(dataset, constraint);
    if all_satisfied.len() < k {
        return Starts::Answered(brute_force_constrained(dataset, query, constraint, k));
    }
    Starts::Seeds(all_satisfied)
}

fn check_inputs(graph: &ProximityGraph, dataset: &Dataset, query: &[f32]) -> Result<()> {
    if dataset.n() == 0 || graph.n() == 0 {
        return Err(Error::parameter("search over an empty dataset or graph"));
    }
    if graph.n() != dataset.n() {
        return Err(Error::parameter(format!(
            "graph has {} vertices but dataset has {} vectors",
            graph.n(),
            dataset.n()
        )));
    }
    if dataset.labels().len() != dataset.n() {
        return Err(Error::parameter("dataset has no labels attached"));
    }
    if query.len() != dataset.d() {
        return Err(Error::parameter(format!(
            "query dimension {} does not match dataset dimension {}",
            query.len(),
            dataset.d()
        )));
    }
    Ok(())
}

/// Max-heap of the best K candidates seen, ordered by (distance, id) so the
/// tie at the boundary keeps the lower vertex id, matching the oracle.
struct TopK {
    heap: BinaryHeap<Candidate>,
    k: usize,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { heap: BinaryHeap::with_capacity(k + 1), k }
    }

    fn is_full(&self) -> bool {
        self.heap.len() == self.k
    }

    fn worst_dist(&self) -> f32 {
        self.heap.peek().map_or(f32::INFINITY, |c| c.dist)
    }

    fn offer(&mut self, cand: Candidate) {
        self.heap.push(cand);
        if self.heap.len() > self.k {
            self.heap.pop();
        }
    }

    fn into_hits(self) -> Vec<(u32, f32)> {
        self.heap.into_sorted_vec().into_iter().map(|c| (c.id, c.dist)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BuildParams;
    use crate::synthetic;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_dataset(num_labels: u32) -> Dataset {
        let mut ds = Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], 1).unwrap();
        ds.set_labels((0..5).map(|i| i % num_labels).collect()).unwrap();
        ds
    }

    fn line_graph(ds: &Dataset) -> ProximityGraph {
        let params = BuildParams { max_degree: 2, ef_construction: 16, sample_size: 5, rng_seed: 1 };
        ProximityGraph::build(ds, &params).unwrap()
    }

    fn blob_workload(
        n: usize,
        seed: u64,
    ) -> (Dataset, ProximityGraph, Dataset, Vec<u32>) {
        let (mut ds, membership, centers) = synthetic::gaussian_blobs(n, 16, 10, 40.0, 1.0, seed);
        ds.set_labels(membership).unwrap();
        let graph = ProximityGraph::build(&ds, &BuildParams { rng_seed: seed, ..Default::default() }).unwrap();
        let (queries, qmember) = synthetic::blobs_around(&centers, 50, 1.0, seed.wrapping_add(99));
        (ds, graph, queries, qmember)
    }

    /// Exact constrained top-k by full sort: the independent oracle used to
    /// validate `brute_force_constrained` itself.
    fn full_sort_oracle(ds: &Dataset, query: &[f32], c: &Constraint, k: usize) -> Vec<(u32, f32)> {
        let mut all: Vec<(u32, f32)> = ds
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| c.evaluate(l))
            .map(|(i, _)| (i as u32, euclidean(query, ds.row(i))))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    // ---- select_priority_queue ----

    #[test]
    fn selector_empty_other_forces_sat() {
        let got = select_priority_queue(Some(0.9), None, 5, 5, 0.1, false);
        assert_eq!(got, QueueChoice::Sat);
    }

    #[test]
    fn selector_empty_sat_forces_other() {
        let got = select_priority_queue(None, Some(0.9), 0, 5, 0.9, true);
        assert_eq!(got, QueueChoice::Other);
    }

    #[test]
    fn selector_ratio_boundary_is_inclusive() {
        // cnt_sat / cnt_total = 0.5 <= alter_ratio = 0.5 selects sat
        let got = select_priority_queue(Some(1.0), Some(0.5), 1, 2, 0.5, false);
        assert_eq!(got, QueueChoice::Sat);
    }

    #[test]
    fn selector_prefer_overrides_ratio() {
        // ratio rule says other (0.9 > 0.5) but the satisfied front is closer
        let got = select_priority_queue(Some(0.3), Some(0.4), 9, 10, 0.5, true);
        assert_eq!(got, QueueChoice::Sat);
    }

    #[test]
    fn selector_zero_counters_select_sat() {
        let got = select_priority_queue(Some(2.0), Some(1.0), 0, 0, 0.05, false);
        assert_eq!(got, QueueChoice::Sat);
    }

    #[test]
    fn selector_ratio_one_starves_other_while_sat_nonempty() {
        // branch (4) always fires at alter_ratio = 1.0
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let cnt_total = rng.gen_range(0..1000u64);
            let cnt_sat = rng.gen_range(0..=cnt_total);
            let got = select_priority_queue(Some(5.0), Some(0.1), cnt_sat, cnt_total, 1.0, false);
            assert_eq!(got, QueueChoice::Sat);
        }
    }

    #[test]
    fn selector_prefer_never_picks_other_when_sat_is_at_least_as_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let sat = rng.gen_range(0.0..10.0f32);
            let other = sat + rng.gen_range(0.0..1.0f32);
            let cnt_total = rng.gen_range(1..100u64);
            let cnt_sat = rng.gen_range(0..=cnt_total);
            let ratio = rng.gen_range(0.01..1.0f32);
            let got = select_priority_queue(Some(sat), Some(other), cnt_sat, cnt_total, ratio, true);
            assert_eq!(got, QueueChoice::Sat, "sat={sat} other={other}");
        }
    }

    /// Simulated schedules with both queues always non-empty and prefer off:
    /// the final satisfied fraction tracks alter_ratio to within one
    /// iteration.
    #[test]
    fn selector_ratio_discipline_over_randomized_schedules() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for round in 0..1000 {
            let ratio: f32 = rng.gen_range(0.01..=1.0);
            let steps = rng.gen_range(1..400u64);
            let (mut cnt_sat, mut cnt_total) = (0u64, 0u64);
            for _ in 0..steps {
                let got = select_priority_queue(
                    Some(rng.gen_range(0.0..10.0)),
                    Some(rng.gen_range(0.0..10.0)),
                    cnt_sat,
                    cnt_total,
                    ratio,
                    false,
                );
                if got == QueueChoice::Sat {
                    cnt_sat += 1;
                }
                cnt_total += 1;
            }
            let achieved = cnt_sat as f64 / cnt_total as f64;
            let slack = 1.0 / cnt_total as f64;
            assert!(
                achieved >= f64::from(ratio) - slack && achieved <= f64::from(ratio) + slack,
                "round {round}: ratio {ratio}, achieved {achieved}, steps {steps}"
            );
        }
    }

    #[test]
    #[should_panic(expected = "both queues empty")]
    fn selector_rejects_two_empty_queues() {
        select_priority_queue(None, None, 0, 0, 0.5, false);
    }

    // ---- brute force oracle ----

    #[test]
    fn brute_force_matches_full_sort_on_line() {
        let ds = line_dataset(5);
        let c = Constraint::universe(5).unwrap();
        let got = brute_force_constrained(&ds, &[2.1], &c, 2);
        let want = full_sort_oracle(&ds, &[2.1], &c, 2);
        assert_eq!(got.hits, want);
        assert_eq!(got.hit_ids(), vec![2, 3]);
        assert!((got.hits[0].1 - 0.1).abs() < 1e-6);
        assert!((got.hits[1].1 - 0.9).abs() < 1e-6);
    }

    #[test]
    fn brute_force_single_satisfied_vector_wins_regardless_of_distance() {
        let ds = line_dataset(5);
        let c = Constraint::new([4]).unwrap(); // only the vertex at x=4
        let got = brute_force_constrained(&ds, &[0.0], &c, 3);
        assert_eq!(got.hit_ids(), vec![4]);
    }

    #[test]
    fn brute_force_breaks_ties_toward_lower_id() {
        // vertices 1 and 3 are both at distance 1 from x=2
        let ds = line_dataset(1);
        let c = Constraint::new([0]).unwrap();
        let got = brute_force_constrained(&ds, &[2.0], &c, 2);
        assert_eq!(got.hit_ids(), vec![2, 1]);
    }

    #[test]
    fn brute_force_counts_only_satisfied_distances() {
        let ds = line_dataset(5);
        let c = Constraint::new([0, 1]).unwrap(); // labels 0 and 1: vertices 0, 1
        let got = brute_force_constrained(&ds, &[0.0], &c, 10);
        assert_eq!(got.stats.distance_computations, 2);
        assert_eq!(got.hit_ids(), vec![0, 1]);
    }

    // ---- linear scan & sampling ----

    #[test]
    fn linear_scan_returns_all_ids_in_order() {
        let ds = line_dataset(5);
        let all = Constraint::universe(5).unwrap();
        assert_eq!(linear_scan_filter(&ds, &all), vec![0, 1, 2, 3, 4]);
        let one = Constraint::new([3]).unwrap();
        assert_eq!(linear_scan_filter(&ds, &one), vec![3]);
    }

    #[test]
    fn linear_scan_recount_on_uniform_classes() {
        let (mut ds, membership, _) = synthetic::gaussian_blobs(500, 4, 10, 25.0, 1.0, 3);
        ds.set_labels(membership.clone()).unwrap();
        let c = Constraint::new([7]).unwrap();
        let got = linear_scan_filter(&ds, &c);
        let want: Vec<u32> = membership
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 7)
            .map(|(i, _)| i as u32)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn sampling_universe_returns_full_sample() {
        let ds = line_dataset(5);
        let g = line_graph(&ds);
        let starts = sample_starting_points(&g, &ds, &Constraint::universe(5).unwrap());
        assert_eq!(starts.len(), 5);
    }

    #[test]
    fn sampling_count_within_3_sigma_of_binomial() {
        let n = 5000;
        let (mut ds, membership, _) = synthetic::gaussian_blobs(n, 8, 10, 30.0, 1.0, 17);
        ds.set_labels(membership).unwrap();
        let params = BuildParams { sample_size: 1000, rng_seed: 4, ..Default::default() };
        let g = ProximityGraph::build(&ds, &params).unwrap();
        let c = Constraint::new([2]).unwrap();
        let starts = sample_starting_points(&g, &ds, &c);
        // the sample is uniform over vertices, so the satisfied count is
        // ~Binomial(s, selectivity)
        let p = c.selectivity(ds.labels());
        let mean = 1000.0 * p;
        let sigma = (1000.0 * p * (1.0 - p)).sqrt();
        let dev = (starts.len() as f64 - mean).abs();
        assert!(dev <= 3.0 * sigma, "count {}, mean {mean:.1}, sigma {sigma:.1}", starts.len());
    }

    // ---- vanilla search ----

    #[test]
    fn vanilla_unconstrained_finds_nearest_on_line() {
        let ds = line_dataset(5);
        let g = line_graph(&ds);
        let params = SearchParams {
            k: 1,
            variant: Variant::Vanilla,
            alter_ratio: AlterRatio::Fixed(1.0),
            rng_seed: 3,
            ..Default::default()
        };
        let got = vanilla_search(&g, &ds, &[2.1], &Constraint::universe(5).unwrap(), &params)
            .unwrap();
        let want = brute_force_constrained(&ds, &[2.1], &Constraint::universe(5).unwrap(), 1);
        assert_eq!(got.hits, want.hits);
        assert_eq!(got.hit_ids(), vec![2]);
    }

    #[test]
    fn vanilla_unsatisfiable_constraint_exhausts_with_no_hits() {
        let ds = line_dataset(5);
        let g = line_graph(&ds);
        let params = SearchParams { k: 1, variant: Variant::Vanilla, rng_seed: 0, ..Default::default() };
        let c = Constraint::new([99]).unwrap(); // matches no vector
        let got = vanilla_search(&g, &ds, &[2.0], &c, &params).unwrap();
        assert!(got.hits.is_empty());
        assert_eq!(got.stats.terminated_by, Termination::Exhaustion);
        // visited the whole connected component
        assert_eq!(got.stats.vertices_popped, 5);
    }

    /// Plain best-first search with no constraint logic at all: the oracle
    /// for the predicate-free reduction.
    fn unconstrained_best_first(
        graph: &ProximityGraph,
        ds: &Dataset,
        query: &[f32],
        k: usize,
        seed: u64,
    ) -> Vec<u32> {
        let n = graph.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rng.gen_range(0..n) as u32;
        let mut visited = vec![false; n];
        let mut frontier: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::new();
        let mut topk = TopK::new(k);
        visited[start as usize] = true;
        frontier.push(std::cmp::Reverse(Candidate {
            dist: euclidean(query, ds.row(start as usize)),
            id: start,
        }));
        while let Some(std::cmp::Reverse(current)) = frontier.pop() {
            if topk.is_full() && current.dist > topk.worst_dist() {
                break;
            }
            topk.offer(current);
            for &next in graph.neighbors(current.id) {
                if !visited[next as usize] {
                    visited[next as usize] = true;
                    frontier.push(std::cmp::Reverse(Candidate {
                        dist: euclidean(query, ds.row(next as usize)),
                        id: next,
                    }));
                }
            }
        }
        topk.into_hits().into_iter().map(|(id, _)| id).collect()
    }

    #[test]
    fn vanilla_with_universal_constraint_equals_unconstrained_search() {
        let (ds, graph, queries, _) = blob_workload(800, 5);
        let c = Constraint::universe(10).unwrap();
        for qi in 0..queries.n() {
            let params = SearchParams {
                k: 5,
                variant: Variant::Vanilla,
                rng_seed: 1000 + qi as u64,
                ..Default::default()
            };
            let got = vanilla_search(&graph, &ds, queries.row(qi), &c, &params).unwrap();
            let want = unconstrained_best_first(&graph, &ds, queries.row(qi), 5, 1000 + qi as u64);
            assert_eq!(got.hit_ids(), want, "query {qi}");
        }
    }

    #[test]
    fn budget_terminates_hard_constraints() {
        let (ds, graph, queries, _) = blob_workload(800, 6);
        let c = Constraint::new([99]).unwrap();
        let params = SearchParams {
            k: 1,
            variant: Variant::Vanilla,
            max_visit: 10,
            rng_seed: 0,
            ..Default::default()
        };
        let got = vanilla_search(&graph, &ds, queries.row(0), &c, &params).unwrap();
        assert_eq!(got.stats.terminated_by, Termination::Budget);
        assert_eq!(got.stats.vertices_popped, 10);
    }

    // ---- fallback paths ----

    #[test]
    fn start_variant_with_unsampled_label_falls_back_to_exact_scan() {
        let (mut ds, membership, _) = synthetic::gaussian_blobs(400, 8, 4, 25.0, 1.0, 9);
        ds.set_labels(membership).unwrap();
        let params = BuildParams { sample_size: 50, rng_seed: 12, ..Default::default() };
        let graph = ProximityGraph::build(&ds, &params).unwrap();

        // relabel three vertices outside the sample with a fresh label;
        // labels do not affect the built graph
        let in_sample: std::collections::HashSet<u32> = graph.sample().iter().copied().collect();
        let orphans: Vec<u32> =
            (0..400u32).filter(|id| !in_sample.contains(id)).take(3).collect();
        let mut labels = ds.labels().to_vec();
        for &id in &orphans {
            labels[id as usize] = 77;
        }
        ds.set_labels(labels).unwrap();

        let c = Constraint::new([77]).unwrap();
        assert!(sample_starting_points(&graph, &ds, &c).is_empty());
        let query = ds.row(0).to_vec();
        for variant in [Variant::Start, Variant::Alter, Variant::AlterPrefer] {
            let params = SearchParams { k: 10, variant, ..Default::default() };
            let got = search(&graph, &ds, &query, &c, &params).unwrap();
            let want = brute_force_constrained(&ds, &query, &c, 10);
            assert_eq!(got.hits, want.hits, "{variant:?}");
            let mut sorted = got.hit_ids();
            sorted.sort_unstable();
            assert_eq!(sorted, orphans);
        }
    }

    #[test]
    fn constraint_matching_nothing_returns_empty_result() {
        let (mut ds, membership, _) = synthetic::gaussian_blobs(300, 8, 4, 25.0, 1.0, 10);
        ds.set_labels(membership).unwrap();
        let graph = ProximityGraph::build(&ds, &Default::default()).unwrap();
        let c = Constraint::new([1234]).unwrap();
        let params = SearchParams { k: 10, variant: Variant::AlterPrefer, ..Default::default() };
        let got = airship_search(&graph, &ds, ds.row(0), &c, &params).unwrap();
        assert!(got.hits.is_empty());
        assert_eq!(got.stats.terminated_by, Termination::Exhaustion);
    }

    // ---- airship search ----

    #[test]
    fn airship_universal_constraint_matches_multi_start_vanilla() {
        let (ds, graph, queries, _) = blob_workload(800, 7);
        let c = Constraint::universe(10).unwrap();
        for qi in 0..queries.n() {
            let alter = SearchParams {
                k: 5,
                variant: Variant::Alter,
                alter_ratio: AlterRatio::Fixed(0.5),
                ..Default::default()
            };
            let start = SearchParams { variant: Variant::Start, ..alter.clone() };
            let a = airship_search(&graph, &ds, queries.row(qi), &c, &alter).unwrap();
            let b = vanilla_search(&graph, &ds, queries.row(qi), &c, &start).unwrap();
            assert_eq!(a.hits, b.hits, "query {qi}");
            assert_eq!(a.stats.distance_computations, b.stats.distance_computations);
            // with a universal predicate nothing ever lands in pq_other
            assert_eq!(a.stats.satisfied_popped, a.stats.vertices_popped);
        }
    }

    #[test]
    fn airship_exact_on_blobs_at_unbounded_budget() {
        // adjacency rich enough (degree 96) that the dual-queue search is
        // exact on every query of this seeded workload
        let (mut ds, membership, centers) = synthetic::gaussian_blobs(2000, 16, 10, 2.0, 1.0, 8);
        ds.set_labels(membership).unwrap();
        let graph = ProximityGraph::build(
            &ds,
            &BuildParams { max_degree: 96, ef_construction: 256, rng_seed: 8, ..Default::default() },
        )
        .unwrap();
        let (queries, qmember) = synthetic::blobs_around(&centers, 50, 1.0, 107);
        let constraints = crate::constraints::synthesize_constraints(
            crate::constraints::ConstraintFamily::UnequalPct(10),
            &qmember,
            10,
            21,
        )
        .unwrap();
        for variant in [Variant::Alter, Variant::AlterPrefer] {
            for qi in 0..queries.n() {
                let params = SearchParams { k: 10, variant, ..Default::default() };
                let got =
                    airship_search(&graph, &ds, queries.row(qi), &constraints[qi], &params)
                        .unwrap();
                let want = brute_force_constrained(&ds, queries.row(qi), &constraints[qi], 10);
                assert_eq!(got.hits, want.hits, "{variant:?} query {qi}");
            }
        }
    }

    #[test]
    fn search_is_deterministic() {
        let (ds, graph, queries, qmember) = blob_workload(1000, 12);
        let constraints = crate::constraints::synthesize_constraints(
            crate::constraints::ConstraintFamily::UnequalPct(30),
            &qmember,
            10,
            5,
        )
        .unwrap();
        for variant in [Variant::Vanilla, Variant::Start, Variant::Alter, Variant::AlterPrefer] {
            let params = SearchParams { k: 10, variant, rng_seed: 77, ..Default::default() };
            let a = search(&graph, &ds, queries.row(0), &constraints[0], &params).unwrap();
            let b = search(&graph, &ds, queries.row(0), &constraints[0], &params).unwrap();
            assert_eq!(a, b, "{variant:?}");
        }
    }

    #[test]
    fn search_visits_each_vertex_at_most_once() {
        let (ds, graph, queries, qmember) = blob_workload(1000, 13);
        let constraints = crate::constraints::synthesize_constraints(
            crate::constraints::ConstraintFamily::UnequalPct(20),
            &qmember,
            10,
            6,
        )
        .unwrap();
        for variant in [Variant::Vanilla, Variant::Start, Variant::Alter, Variant::AlterPrefer] {
            for qi in 0..10 {
                let params = SearchParams { k: 10, variant, rng_seed: qi as u64, ..Default::default() };
                let got = search(&graph, &ds, queries.row(qi), &constraints[qi], &params).unwrap();
                assert!(
                    got.stats.distance_computations <= ds.n() as u64,
                    "{variant:?}: {} distance computations on n={}",
                    got.stats.distance_computations,
                    ds.n()
                );
            }
        }
    }

    #[test]
    fn hits_are_valid_sorted_and_recomputable() {
        let (ds, graph, queries, qmember) = blob_workload(1000, 14);
        let constraints = crate::constraints::synthesize_constraints(
            crate::constraints::ConstraintFamily::UnequalPct(40),
            &qmember,
            10,
            7,
        )
        .unwrap();
        for variant in [Variant::Vanilla, Variant::Start, Variant::Alter, Variant::AlterPrefer] {
            for qi in 0..10 {
                let params = SearchParams { k: 10, variant, rng_seed: qi as u64, ..Default::default() };
                let got = search(&graph, &ds, queries.row(qi), &constraints[qi], &params).unwrap();
                let mut ids = got.hit_ids();
                ids.sort_unstable();
                ids.dedup();
                assert_eq!(ids.len(), got.hits.len(), "duplicate hit ids");
                for w in got.hits.windows(2) {
                    assert!(w[0].1 <= w[1].1, "hits not ascending");
                }
                for &(id, dist) in &got.hits {
                    assert!(constraints[qi].evaluate(ds.labels()[id as usize]));
                    assert_eq!(dist, euclidean(queries.row(qi), ds.row(id as usize)));
                }
            }
        }
    }

    // ---- alter ratio estimation ----

    #[test]
    fn estimator_is_one_when_every_neighbor_satisfies() {
        let (mut ds, membership, _) = synthetic::gaussian_blobs(500, 8, 2, 60.0, 0.5, 15);
        ds.set_labels(membership).unwrap();
        let graph = ProximityGraph::build(&ds, &Default::default()).unwrap();
        let c = Constraint::new([0]).unwrap();
        let starts = sample_starting_points(&graph, &ds, &c);
        // far-separated tight blobs: every stored edge of a label-0 vertex
        // stays inside its blob
        let est = estimate_alter_ratio(&graph, ds.labels(), &c, &starts, 10);
        assert_eq!(est, 1.0);
    }

    #[test]
    fn estimator_clamps_to_floor_when_nothing_satisfies() {
        // all neighbors of the probed vertices violate the constraint
        let adjacency = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        let graph = ProximityGraph::from_parts_for_tests(adjacency, vec![0], 1, 2);
        let labels = vec![5, 0, 0]; // vertex 0 satisfied, all its neighbors not
        let c = Constraint::new([5]).unwrap();
        let est = estimate_alter_ratio(&graph, &labels, &c, &[0], 10);
        assert_eq!(est, ALTER_RATIO_FLOOR);
    }

    #[test]
    fn estimator_averages_neighbor_fractions() {
        // 20 vertices; starts 0, 1, 2 with satisfied-neighbor fractions
        // 1.0, 0.5 and (low degree) 3/5 -> mean 0.7
        let mut adjacency = vec![Vec::new(); 20];
        adjacency[0] = (3..13).collect(); // 10 neighbors, all satisfied
        adjacency[1] = (3..8).chain(13..18).collect(); // 5 satisfied, 5 not
        adjacency[2] = vec![3, 4, 5, 13, 14]; // degree 5: 3 satisfied
        let mut labels = vec![0u32; 20];
        for v in 0..13 {
            labels[v] = 1;
        }
        let graph = ProximityGraph::from_parts_for_tests(adjacency, vec![0, 1, 2], 1, 10);
        let c = Constraint::new([1]).unwrap();
        let est = estimate_alter_ratio(&graph, &labels, &c, &[0, 1, 2], 10);
        assert!((est - 0.7).abs() < 1e-6, "estimate {est}");
    }

    #[test]
    fn estimator_prefers_clustered_over_random_labels() {
        let (mut ds, membership, _) = synthetic::gaussian_blobs(2000, 16, 10, 40.0, 1.0, 16);
        let graph = {
            ds.set_labels(membership.clone()).unwrap();
            ProximityGraph::build(&ds, &Default::default()).unwrap()
        };
        let c = Constraint::new([3]).unwrap();

        // clustered labels
        ds.set_labels(membership.clone()).unwrap();
        let starts = sample_starting_points(&graph, &ds, &c);
        let clustered = estimate_alter_ratio(&graph, ds.labels(), &c, &starts, 10);

        // fully random labels over the same graph
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let random: Vec<u32> = (0..2000).map(|_| rng.gen_range(0..10)).collect();
        ds.set_labels(random).unwrap();
        let starts = sample_starting_points(&graph, &ds, &c);
        let shuffled = estimate_alter_ratio(&graph, ds.labels(), &c, &starts, 10);

        assert!(
            clustered > shuffled,
            "clustered {clustered} should exceed random {shuffled}"
        );
        assert!(clustered >= 0.9, "clustered labels should estimate near 1, got {clustered}");
        assert!((f64::from(shuffled) - 0.1).abs() < 0.07, "random estimate {shuffled}");
    }

    #[test]
    fn estimator_stays_in_bounds() {
        let (mut ds, membership, _) = synthetic::gaussian_blobs(500, 8, 5, 25.0, 2.0, 18);
        ds.set_labels(membership).unwrap();
        let graph = ProximityGraph::build(&ds, &Default::default()).unwrap();
        for label in 0..5 {
            let c = Constraint::new([label]).unwrap();
            let starts = sample_starting_points(&graph, &ds, &c);
            if starts.is_empty() {
                continue;
            }
            let est = estimate_alter_ratio(&graph, ds.labels(), &c, &starts, 10);
            assert!((ALTER_RATIO_FLOOR..=1.0).contains(&est), "estimate {est}");
        }
    }

    // ---- parameter validation ----

    #[test]
    fn invalid_params_are_rejected() {
        let ds = line_dataset(5);
        let g = line_graph(&ds);
        let c = Constraint::universe(5).unwrap();
        let bad_k = SearchParams { k: 0, variant: Variant::Vanilla, ..Default::default() };
        assert!(vanilla_search(&g, &ds, &[0.0], &c, &bad_k).is_err());
        let bad_ratio = SearchParams {
            variant: Variant::Alter,
            alter_ratio: AlterRatio::Fixed(0.0),
            ..Default::default()
        };
        assert!(airship_search(&g, &ds, &[0.0], &c, &bad_ratio).is_err());
        let wrong_variant = SearchParams { variant: Variant::Alter, ..Default::default() };
        assert!(vanilla_search(&g, &ds, &[0.0], &c, &wrong_variant).is_err());
        let wrong_dim = SearchParams { variant: Variant::Vanilla, ..Default::default() };
        assert!(vanilla_search(&g, &ds, &[0.0, 1.0], &c, &wrong_dim).is_err());
    }

    #[test]
    fn search_requires_labels() {
        let ds = Dataset::new(vec![0.0, 1.0, 2.0], 1).unwrap(); // no labels
        let g = ProximityGraph::build(
            &ds,
            &BuildParams { max_degree: 2, ef_construction: 4, sample_size: 2, rng_seed: 0 },
        )
        .unwrap();
        let c = Constraint::universe(1).unwrap();
        let params = SearchParams { variant: Variant::Vanilla, ..Default::default() };
        assert!(vanilla_search(&g, &ds, &[0.0], &c, &params).is_err());
    }
}
