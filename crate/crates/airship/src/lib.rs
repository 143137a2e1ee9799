//! AIRSHIP: constrained approximate near-neighbor search on a proximity
//! graph.
//!
//! Every query carries a boolean predicate over a per-vector label, and the
//! search returns the top-K nearest vectors among those that satisfy it.
//! Instead of over-fetching and post-filtering, the traversal itself is
//! constraint-aware:
//!
//! * starting points come from a stored sample of the base vectors, filtered
//!   by the predicate ([`search::sample_starting_points`]);
//! * the frontier is split into a satisfied and an unsatisfied priority
//!   queue, scheduled by a target ratio with an optional greedy override
//!   ([`search::airship_search`], [`search::select_priority_queue`]);
//! * the ratio can be estimated per query from the stored, distance-sorted
//!   edges of the starting points ([`search::estimate_alter_ratio`]).
//!
//! The crate also ships the supporting cast a reproducible evaluation needs:
//! fvecs/ivecs/label file handling ([`dataset`]), k-means label synthesis
//! with controlled randomness ([`labeling`]), constraint-family synthesis
//! ([`constraints`]), graph construction and serialization ([`graph`]), an
//! exact brute-force oracle with recall/QPS metrics ([`oracle`]), and seeded
//! Gaussian-blob generation for tests ([`synthetic`]).

pub mod config;
pub mod constraints;
pub mod dataset;
pub mod graph;
pub mod labeling;
pub mod oracle;
pub mod search;
pub mod synthetic;

mod candidate;
mod error;

pub use constraints::{Constraint, ConstraintFamily};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use graph::{BuildParams, ProximityGraph};
pub use labeling::LabelingConfig;
pub use oracle::GroundTruth;
pub use search::{AlterRatio, SearchParams, SearchResult, Termination, Variant};
