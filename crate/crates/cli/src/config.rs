//! `key = value` configuration files whose keys mirror the long flag names.
//! A flag given on the command line always wins over the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use axfault_core::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Parses `key = value` lines; `#` starts a comment. Keys must be one of
    /// `known`.
    pub fn parse(text: &str, known: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
            let key = key.trim().replace('_', "-");
            if !known.contains(&key) {
                return Err(Error::Config(format!("config line {}: unknown key {key:?}", i + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("config line {}: {key} set twice", i + 1)));
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path, known: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, known)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the parsed config value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::Config(format!("config key {key} = {v:?}: {e}")))
            })
            .transpose()
    }

    /// Like [`pick`](Self::pick) for comma-separated lists; an empty flag
    /// list counts as not given.
    pub fn pick_list<T: FromStr>(&self, flag: Vec<T>, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        if !flag.is_empty() {
            return Ok(Some(flag));
        }
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse()
                            .map_err(|e| Error::Config(format!("config key {key} item {item:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Boolean switches: set by the flag or by `key = true`.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}
