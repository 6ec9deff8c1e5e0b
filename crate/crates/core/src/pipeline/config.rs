//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::{Error, Result};

/// Parsed `key = value` lines. `#` starts a comment; blank lines are ignored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    /// Parse `text`, rejecting keys outside `allowed` and repeated keys.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(Error::invalid(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::invalid(format!("line {}: key {k:?} given twice", i + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse().map_err(|_| Error::invalid(format!("bad value {v:?} for {key}"))))
            .transpose()
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|p| p.trim().parse().map_err(|_| Error::invalid(format!("bad list item {p:?} for {key}"))))
                    .collect()
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_rejects_unknown_keys() {
        let kv = KeyValues::parse("# run\nseed = 7\nlambdas = 1, 2.5 # tail\n\n", &["seed", "lambdas"]).unwrap();
        assert_eq!(kv.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(kv.list::<f64>("lambdas").unwrap(), Some(vec![1.0, 2.5]));
        assert_eq!(kv.get::<u64>("missing").unwrap(), None);
        assert!(KeyValues::parse("sed = 1", &["seed"]).is_err());
        assert!(KeyValues::parse("seed = 1\nseed = 2", &["seed"]).is_err());
        assert!(KeyValues::parse("seed", &["seed"]).is_err());
        assert!(kv.get::<u64>("lambdas").is_err());
    }
}
