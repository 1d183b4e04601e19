//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; keys are normalised
//! to lower case with `-` folded to `_`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Usage(format!("config line {}: expected `key = value`", i + 1)));
        };
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if key.is_empty() {
            return Err(Error::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.insert(key, v.trim().trim_matches('"').to_owned());
    }
    Ok(out)
}
