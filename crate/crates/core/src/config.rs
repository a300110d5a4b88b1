//! Plain-text `key=value` configuration.
//!
//! Blank lines and `#` comments are ignored, except that `# config.<key>=<value>`
//! lines (the echo written into report headers) are read as entries, so a
//! report file can be passed back as a config.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let body = if let Some(rest) = line.strip_prefix("# config.") {
                rest
            } else if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            } else if line.contains(',') && !line.contains('=') {
                // report section rows
                continue;
            } else {
                line
            };
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected key=value, got `{line}`"),
                });
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "empty key".into(),
                });
            }
            kv.map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(kv)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn set<T: Display>(&mut self, key: &str, value: T) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Entries of `other` override entries of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.map.insert(k.clone(), v.clone());
        }
    }

    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for key `{key}`")))
}

/// Parses a comma-separated list.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}
