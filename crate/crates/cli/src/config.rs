//! Key-value configuration files: `key = value` lines, `#` comments, and a
//! mandatory `config_version`. Keys mirror the long flag names with
//! underscores; explicit command-line flags win over file values.

use std::collections::HashMap;
use std::path::Path;

pub const CONFIG_FILE_VERSION: u64 = 1;

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {} is not `key = value`: {raw:?}", idx + 1))?;
            values.insert(
                key.trim().replace('-', "_"),
                value.trim().to_owned(),
            );
        }
        let version: u64 = values
            .get("config_version")
            .ok_or("config file is missing config_version")?
            .parse()
            .map_err(|e| format!("bad config_version: {e}"))?;
        if version != CONFIG_FILE_VERSION {
            return Err(format!(
                "config_version {version} unsupported (expected {CONFIG_FILE_VERSION})"
            ));
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key {key}={raw:?}: {e}")),
        }
    }
}

/// Flag value if given, else config-file value, else default.
pub fn resolve<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    file: &ConfigFile,
    key: &str,
    default: T,
) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    Ok(file.get::<T>(key)?.unwrap_or(default))
}

/// Flag value if given, else config-file value, else `None`.
pub fn resolve_opt<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    file: &ConfigFile,
    key: &str,
) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    file.get::<T>(key)
}
