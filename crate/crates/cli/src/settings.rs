//! Flag values merged with an optional `key = value` config file. Every flag
//! has a config twin under the same name; a flag given on the command line
//! wins.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use subfuse_core::io::parse_key_values;

/// Bad flags or config values; reported with exit code 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    Usage(message.into()).into()
}

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    /// Loads `path` if given, rejecting keys not in `known`.
    pub fn load(path: Option<&Path>, known: &[&str]) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let pairs = parse_key_values(&text).map_err(|e| usage(e.to_string()))?;
        let mut file = BTreeMap::new();
        for (key, value) in pairs {
            let key = key.replace('_', "-");
            if !known.contains(&key.as_str()) {
                return Err(usage(format!(
                    "unknown config key `{key}` in {}",
                    path.display()
                )));
            }
            file.insert(key, value);
        }
        Ok(Settings { file })
    }

    /// The flag if set, else the config value, else `None`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config `{key} = {raw}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    /// A switch: set by the flag or by `key = true` in the config.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        self.get_or(None, key, false)
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(flag, key)?
            .ok_or_else(|| usage(format!("missing --{key} (flag or config key)")))
    }
}
