//! Flat `key=value` configuration files, used by the bench CLI.
//!
//! One pair per line; blank lines and `#` comments are ignored; keys and
//! values are trimmed. Later occurrences of a key override earlier ones.

use crate::error::{Error, Result};

pub fn parse_kv_bytes(bytes: &[u8]) -> Result<Vec<(String, String)>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("config file is not valid UTF-8: {e}")))?;
    parse_kv(text)
}

pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(format!(
                "line {}: expected key=value, found {line:?}",
                i + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::format(format!("line {}: empty key", i + 1)));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
