//! `key=value` run configuration merged with command-line overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

/// Merged settings: file values first, then command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Params {
    values: BTreeMap<String, String>,
    allowed: BTreeSet<&'static str>,
}

impl Params {
    /// Reads `path` (if any) and applies `overrides`. Keys outside `allowed`
    /// are rejected.
    pub fn load(
        path: Option<&Path>,
        overrides: Vec<(&'static str, String)>,
        allowed: &[&'static str],
    ) -> Result<Self, UsageError> {
        let allowed: BTreeSet<_> = allowed.iter().copied().collect();
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
            for (no, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    UsageError(format!("{}:{}: expected key=value", path.display(), no + 1))
                })?;
                let key = k.trim().replace('-', "_");
                if !allowed.contains(key.as_str()) {
                    return Err(UsageError(format!("{}:{}: unknown key `{key}`", path.display(), no + 1)));
                }
                values.insert(key, v.trim().to_string());
            }
        }
        for (k, v) in overrides {
            values.insert(k.to_string(), v);
        }
        Ok(Self { values, allowed })
    }

    /// A copy with `defaults` filled in where no value is set.
    pub fn with_defaults(&self, defaults: &[(&str, String)]) -> Self {
        let mut out = self.clone();
        for (k, v) in defaults {
            out.values.entry(k.to_string()).or_insert_with(|| v.clone());
        }
        out
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, UsageError>
    where
        T::Err: Display,
    {
        debug_assert!(self.allowed.contains(key), "undeclared key {key}");
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| UsageError(format!("invalid value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        self.opt(key)?
            .ok_or_else(|| UsageError(format!("missing required setting `{key}`")))
    }
}

/// Parses `30,30,500` style lists.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, UsageError>
where
    T::Err: Display,
{
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| UsageError(format!("invalid list entry `{p}` in `{s}`: {e}")))
        })
        .collect()
}
