//! Query constraints as label-set membership predicates.
//!
//! Searches only see a constraint through [`Constraint::evaluate`], so richer
//! predicates can be added later without touching traversal code; everything
//! here keeps evaluation O(1) per vector.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Set-membership predicate over a vector's label: satisfied iff the label
/// is in `allowed`. The allowed set is never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    allowed: Vec<u32>, // sorted, deduplicated, non-empty
}

impl Constraint {
    pub fn new(allowed: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut allowed: Vec<u32> = allowed.into_iter().collect();
        allowed.sort_unstable();
        allowed.dedup();
        if allowed.is_empty() {
            return Err(Error::parameter("constraint with an empty allowed set"));
        }
        Ok(Constraint { allowed })
    }

    /// Constraint satisfied by every label in `[0, num_labels)`.
    pub fn universe(num_labels: u32) -> Result<Self> {
        Constraint::new(0..num_labels)
    }

    pub fn evaluate(&self, label: u32) -> bool {
        self.allowed.binary_search(&label).is_ok()
    }

    /// Allowed labels, ascending.
    pub fn allowed(&self) -> &[u32] {
        &self.allowed
    }

    /// Exact fraction of the given base labels this constraint satisfies.
    pub fn selectivity(&self, labels: &[u32]) -> f64 {
        debug_assert!(!labels.is_empty());
        if labels.is_empty() {
            return 0.0;
        }
        let hit = labels.iter().filter(|&&l| self.evaluate(l)).count();
        hit as f64 / labels.len() as f64
    }
}

/// Families of synthetic per-query constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    /// Results must carry the query's own label.
    Equal,
    /// Results must carry one of X% of the labels, drawn at random from the
    /// labels unequal to the query's.
    UnequalPct(u32),
}

impl ConstraintFamily {
    fn validate(&self, num_labels: u32) -> Result<()> {
        match *self {
            ConstraintFamily::Equal => Ok(()),
            ConstraintFamily::UnequalPct(pct) => {
                if pct == 0 || pct > 100 {
                    return Err(Error::parameter(format!("pct {pct} out of range (0, 100]")));
                }
                if num_labels < 2 {
                    return Err(Error::parameter(
                        "unequal constraints need at least 2 distinct labels",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Number of labels an `unequal-X%` constraint allows: round-half-up of
/// `X% * num_labels`, clamped into `[1, num_labels - 1]`.
pub fn unequal_allowed_count(pct: u32, num_labels: u32) -> u32 {
    let rounded = (u64::from(pct) * u64::from(num_labels) + 50) / 100;
    (rounded as u32).clamp(1, num_labels - 1)
}

/// Build one constraint per query label. Deterministic for a fixed seed.
pub fn synthesize_constraints(
    family: ConstraintFamily,
    query_labels: &[u32],
    num_labels: u32,
    rng_seed: u64,
) -> Result<Vec<Constraint>> {
    family.validate(num_labels)?;
    if let Some(bad) = query_labels.iter().find(|&&l| l >= num_labels) {
        return Err(Error::parameter(format!(
            "query label {bad} out of range [0, {num_labels})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    query_labels
        .iter()
        .map(|&q| match family {
            ConstraintFamily::Equal => Constraint::new([q]),
            ConstraintFamily::UnequalPct(pct) => {
                let count = unequal_allowed_count(pct, num_labels) as usize;
                let candidates: Vec<u32> = (0..num_labels).filter(|&l| l != q).collect();
                let picked = rand::seq::index::sample(&mut rng, candidates.len(), count);
                Constraint::new(picked.iter().map(|i| candidates[i]))
            }
        })
        .collect()
}

/// Parse a constraint file: one line per query, comma-separated allowed
/// label ids.
pub fn parse_constraints(bytes: &[u8]) -> Result<Vec<Constraint>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("constraint file is not valid UTF-8: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut ids = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            if field.is_empty() {
                return Err(Error::format(format!("line {line_no}: empty label id")));
            }
            ids.push(field.parse::<u32>().map_err(|_| {
                Error::format(format!("line {line_no}: invalid label id {field:?}"))
            })?);
        }
        out.push(
            Constraint::new(ids)
                .map_err(|_| Error::format(format!("line {line_no}: empty allowed set")))?,
        );
    }
    Ok(out)
}

pub fn constraints_to_bytes(constraints: &[Constraint]) -> Vec<u8> {
    let mut out = String::new();
    for c in constraints {
        let ids: Vec<String> = c.allowed().iter().map(u32::to_string).collect();
        out.push_str(&ids.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn load_constraints(path: impl AsRef<Path>) -> Result<Vec<Constraint>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_constraints(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_constraints(constraints: &[Constraint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, constraints_to_bytes(constraints)).map_err(|e| Error::io(path, e))
}
