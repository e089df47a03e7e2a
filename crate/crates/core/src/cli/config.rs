//! `key = value` experiment files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

/// Parsed `key = value` lines; `#` starts a comment, `-` and `_` in keys are equivalent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    values: BTreeMap<String, String>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            values.insert(normalize_key(k), v.trim().to_owned());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Fails on keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    /// The flag if given, else the file value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|v| v.parse().map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))))
            .transpose()
    }

    /// Comma-separated list from the flag, else the file.
    pub fn pick_list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| CliError::Usage(format!("config key `{key}`: {e}"))))
                .collect(),
            None => Ok(default),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let kv = KeyValues::parse("# run\nk = 16\nlr-phase1=0.5 # fast\n").unwrap();
        assert_eq!(kv.pick(None, "k", 8usize).unwrap(), 16);
        assert_eq!(kv.pick(Some(32), "k", 8usize).unwrap(), 32);
        assert_eq!(kv.pick(None, "trials", 5usize).unwrap(), 5);
        assert_eq!(kv.pick(None, "lr_phase1", 0.1f64).unwrap(), 0.5);
        assert!(kv.check_keys(&["k"]).is_err());
        assert!(kv.check_keys(&["k", "lr_phase1"]).is_ok());
        assert!(KeyValues::parse("oops").is_err());
        assert!(kv.pick::<usize>(None, "lr_phase1", 0).is_err());
    }

    #[test]
    fn lists() {
        let kv = KeyValues::parse("k_list = 8, 16,24").unwrap();
        assert_eq!(kv.pick_list::<usize>(None, "k_list", vec![]).unwrap(), vec![8, 16, 24]);
        assert_eq!(kv.pick_list(Some(vec![4usize]), "k_list", vec![]).unwrap(), vec![4]);
    }
}
