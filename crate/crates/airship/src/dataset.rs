//! Base-vector storage and the on-disk interchange formats.
//!
//! Three formats are handled here, all little-endian:
//!
//! * `fvecs` — repeated records of `[i32 dim][dim x f32]`. Every record must
//!   share the same dimension; the file defines a dense `n x d` matrix.
//! * `ivecs` — same framing with `i32` payloads. Rows may differ in length
//!   (ground-truth files use one row per query, and a query with fewer
//!   satisfied vectors than `K` gets a short row).
//! * labels — LF-terminated decimal integers, one per vector, in record
//!   order. Kept in a sidecar file so unmodified public `fvecs` files can be
//!   used directly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense matrix of `n` base vectors of dimension `d`, with an optional
/// integer label per vector.
///
/// Labels are empty until attached with [`Dataset::set_labels`]; operations
/// that evaluate constraints require them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vectors: Vec<f32>, // row-major, n * d
    labels: Vec<u32>,  // empty, or exactly n entries
    n: usize,
    d: usize,
}

impl Dataset {
    /// Wrap a row-major buffer. `vectors.len()` must be a multiple of `d`.
    pub fn new(vectors: Vec<f32>, d: usize) -> Result<Self> {
        if vectors.is_empty() {
            return Ok(Dataset { vectors, labels: Vec::new(), n: 0, d: 0 });
        }
        if d == 0 {
            return Err(Error::parameter("dimension must be >= 1 for a non-empty dataset"));
        }
        if d > i32::MAX as usize {
            return Err(Error::parameter(format!("dimension {d} exceeds the fvecs limit")));
        }
        if vectors.len() % d != 0 {
            return Err(Error::parameter(format!(
                "buffer of {} floats is not a multiple of dimension {d}",
                vectors.len()
            )));
        }
        let n = vectors.len() / d;
        Ok(Dataset { vectors, labels: Vec::new(), n, d })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut vectors = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::parameter(format!(
                    "row {i} has {} values, expected {d}",
                    row.len()
                )));
            }
            vectors.extend_from_slice(row);
        }
        Dataset::new(vectors, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Labels in vector order; empty when none have been attached.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Vec<u32>) -> Result<()> {
        if labels.len() != self.n {
            return Err(Error::parameter(format!(
                "{} labels for {} vectors",
                labels.len(),
                self.n
            )));
        }
        self.labels = labels;
        Ok(())
    }

    /// Checksum over shape and vector bytes (labels excluded, so a relabeled
    /// dataset keeps its index valid — the graph depends on vectors only).
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.update(&(self.n as u64).to_le_bytes());
        h.update(&(self.d as u64).to_le_bytes());
        for v in &self.vectors {
            h.update(&v.to_le_bytes());
        }
        h.finish()
    }

    /// Parse an `fvecs` byte stream. An empty input yields an empty dataset.
    pub fn from_fvecs_bytes(bytes: &[u8]) -> Result<Self> {
        let mut vectors = Vec::new();
        let mut dim: Option<usize> = None;
        let mut offset = 0usize;
        let mut record = 0usize;
        while offset < bytes.len() {
            let d = read_record_dim(bytes, &mut offset, record)?;
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(Error::format(format!(
                        "record {record}: inconsistent dimension {d}, expected {expected}"
                    )));
                }
                Some(_) => {}
            }
            let need = d * 4;
            let avail = bytes.len() - offset;
            if avail < need {
                return Err(Error::format(format!(
                    "truncated record {record} at byte offset {offset}: \
                     need {need} bytes of vector data, found {avail}"
                )));
            }
            vectors.reserve(d);
            for chunk in bytes[offset..offset + need].chunks_exact(4) {
                vectors.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            offset += need;
            record += 1;
        }
        Dataset::new(vectors, dim.unwrap_or(0))
    }

    pub fn to_fvecs_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.n * (4 + self.d * 4));
        for i in 0..self.n {
            out.extend_from_slice(&(self.d as i32).to_le_bytes());
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn read_record_dim(bytes: &[u8], offset: &mut usize, record: usize) -> Result<usize> {
    let avail = bytes.len() - *offset;
    if avail < 4 {
        return Err(Error::format(format!(
            "truncated record {record} at byte offset {offset}: \
             need 4 bytes for the dimension header, found {avail}",
            offset = *offset
        )));
    }
    let raw = i32::from_le_bytes(bytes[*offset..*offset + 4].try_into().unwrap());
    if raw <= 0 {
        return Err(Error::format(format!(
            "record {record} at byte offset {offset}: non-positive dimension {raw}",
            offset = *offset
        )));
    }
    *offset += 4;
    Ok(raw as usize)
}

pub fn load_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_fvecs_bytes(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_fvecs(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset.to_fvecs_bytes()).map_err(|e| Error::io(path, e))
}

/// Parse an `ivecs` byte stream into rows. Rows may differ in length and a
/// zero-length row is legal (a query whose constraint matched nothing).
pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<i32>>> {
    let mut rows = Vec::new();
    let mut offset = 0usize;
    let mut record = 0usize;
    while offset < bytes.len() {
        let avail = bytes.len() - offset;
        if avail < 4 {
            return Err(Error::format(format!(
                "truncated record {record} at byte offset {offset}: \
                 need 4 bytes for the length header, found {avail}"
            )));
        }
        let raw = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if raw < 0 {
            return Err(Error::format(format!(
                "record {record} at byte offset {offset}: negative length {raw}"
            )));
        }
        offset += 4;
        let len = raw as usize;
        let need = len * 4;
        let avail = bytes.len() - offset;
        if avail < need {
            return Err(Error::format(format!(
                "truncated record {record} at byte offset {offset}: \
                 need {need} bytes of payload, found {avail}"
            )));
        }
        let mut row = Vec::with_capacity(len);
        for chunk in bytes[offset..offset + need].chunks_exact(4) {
            row.push(i32::from_le_bytes(chunk.try_into().unwrap()));
        }
        offset += need;
        rows.push(row);
        record += 1;
    }
    Ok(rows)
}

pub fn ivecs_to_bytes(rows: &[Vec<i32>]) -> Vec<u8> {
    let payload: usize = rows.iter().map(|r| 4 + r.len() * 4).sum();
    let mut out = Vec::with_capacity(payload);
    for row in rows {
        out.extend_from_slice(&(row.len() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ivecs(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_ivecs(rows: &[Vec<i32>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ivecs_to_bytes(rows)).map_err(|e| Error::io(path, e))
}

/// Parse a labels file: one decimal integer per line, 1-based line numbers
/// in errors.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("labels file is not valid UTF-8: {e}")))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        labels.push(line.parse::<u32>().map_err(|_| {
            Error::format(format!(
                "line {}: expected a non-negative integer label, found {line:?}",
                i + 1
            ))
        })?);
    }
    Ok(labels)
}

pub fn labels_to_bytes(labels: &[u32]) -> Vec<u8> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_labels(labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labels_to_bytes(labels)).map_err(|e| Error::io(path, e))
}

/// Euclidean distance between two equal-length vectors.
pub fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc.sqrt()
}

/// FNV-1a 64-bit hash, used for dataset and file checksums.
#[derive(Debug, Clone)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

pub fn checksum_bytes(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.update(bytes);
    h.finish()
}

/// Checksum of a file's raw bytes (ground-truth sidecars use this to pin the
/// query and constraint files they were generated from).
pub fn checksum_file(path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(checksum_bytes(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fvecs_single_record() {
        let mut bytes = vec![2, 0, 0, 0];
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        let ds = Dataset::from_fvecs_bytes(&bytes).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn fvecs_empty_input() {
        let ds = Dataset::from_fvecs_bytes(&[]).unwrap();
        assert_eq!(ds.n(), 0);
        assert_eq!(ds.d(), 0);
    }

    #[test]
    fn fvecs_known_encoding() {
        let ds = Dataset::new(vec![3.5], 1).unwrap();
        let bytes = ds.to_fvecs_bytes();
        assert_eq!(bytes.len(), 8);
        assert_eq!(&bytes[..4], &[1, 0, 0, 0]);
        assert_eq!(&bytes[4..], &3.5f32.to_le_bytes());
    }

    #[test]
    fn fvecs_two_by_two_is_24_bytes() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(ds.to_fvecs_bytes().len(), 24);
    }

    #[test]
    fn fvecs_truncated_record_names_offset() {
        let mut bytes = vec![2, 0, 0, 0];
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        // second float missing
        let err = Dataset::from_fvecs_bytes(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("byte offset 4"), "{msg}");
        assert!(msg.contains("truncated"), "{msg}");
    }

    #[test]
    fn fvecs_inconsistent_dim_names_record() {
        let mut bytes = vec![1, 0, 0, 0];
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&[2, 0, 0, 0]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        let err = Dataset::from_fvecs_bytes(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("record 1"), "{msg}");
        assert!(msg.contains("inconsistent"), "{msg}");
    }

    #[test]
    fn fvecs_rejects_non_positive_dim() {
        let bytes = (-1i32).to_le_bytes();
        assert!(Dataset::from_fvecs_bytes(&bytes).is_err());
        let bytes = 0i32.to_le_bytes();
        assert!(Dataset::from_fvecs_bytes(&bytes).is_err());
    }

    #[test]
    fn fvecs_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fvecs");
        let ds = Dataset::new(vec![0.5, -1.25, 3.0, f32::MIN_POSITIVE, 0.0, 7.5], 3).unwrap();
        save_fvecs(&ds, &path).unwrap();
        let back = load_fvecs(&path).unwrap();
        assert_eq!(back, ds);
        // re-save reproduces identical bytes
        let path2 = dir.path().join("b.fvecs");
        save_fvecs(&back, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn ivecs_round_trip_and_empty_rows() {
        let rows = vec![vec![1, 2, 3], vec![], vec![9]];
        let bytes = ivecs_to_bytes(&rows);
        assert_eq!(parse_ivecs(&bytes).unwrap(), rows);
    }

    #[test]
    fn ivecs_rejects_negative_length() {
        let bytes = (-2i32).to_le_bytes();
        assert!(parse_ivecs(&bytes).is_err());
    }

    #[test]
    fn labels_parse_and_round_trip() {
        assert_eq!(parse_labels(b"0\n3\n").unwrap(), vec![0, 3]);
        let labels = vec![5, 0, 17];
        assert_eq!(parse_labels(&labels_to_bytes(&labels)).unwrap(), labels);
    }

    #[test]
    fn labels_error_cites_line() {
        let err = parse_labels(b"0\nx\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn checksum_ignores_labels() {
        let mut ds = Dataset::new(vec![1.0, 2.0], 1).unwrap();
        let before = ds.checksum();
        ds.set_labels(vec![4, 7]).unwrap();
        assert_eq!(ds.checksum(), before);
    }

    #[test]
    fn euclidean_matches_hand_arithmetic() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_eq!(euclidean(&[2.0], &[2.5]), 0.5);
    }
}
