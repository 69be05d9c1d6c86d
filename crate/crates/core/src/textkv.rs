//! `key=value` text files used by dataset and checkpoint manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, String>,
}

pub(crate) fn parse(text: &str, path: &Path) -> Result<KeyValues> {
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key=value", lineno + 1)))?;
        if entries.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::format(path, format!("duplicate key `{}`", k.trim())));
        }
    }
    Ok(KeyValues { path: path.to_path_buf(), entries })
}

impl KeyValues {
    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(&self.path, format!("missing key `{key}`")))
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get_str(key)?;
        raw.parse().map_err(|_| Error::format(&self.path, format!("invalid value `{raw}` for `{key}`")))
    }
}
