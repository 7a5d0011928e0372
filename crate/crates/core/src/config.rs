//! Plain-text `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, list values are comma
//! separated. Real-valued fields accept the usual decimal forms plus
//! `pi`, `-pi`, `pi/N` and `-pi/N`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { key: String, line: usize },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(key: &str, message: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

/// Parsed key-value file. Keys keep their file order.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: n + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: n + 1 });
            }
            if kv.index.contains_key(key) {
                return Err(ConfigError::Duplicate {
                    key: key.to_string(),
                    line: n + 1,
                });
            }
            kv.index.insert(key.to_string(), kv.entries.len());
            kv.entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.index.get(key).map(|&i| self.entries[i].1.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries.iter().filter_map(move |(k, v)| {
            k.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, v.as_str()))
        })
    }

    pub fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| parse_real(v).map_err(|m| ConfigError::invalid(key, m)))
            .transpose()
    }

    pub fn real_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                split_list(v)
                    .map(|t| parse_real(t).map_err(|m| ConfigError::invalid(key, m)))
                    .collect()
            })
            .transpose()
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError::invalid(key, e)))
            .transpose()
    }

    pub fn parsed_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                split_list(v)
                    .map(|t| t.parse::<T>().map_err(|e| ConfigError::invalid(key, e)))
                    .collect()
            })
            .transpose()
    }
}

pub fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// Parses a real number, accepting `pi` multiples of the form `[-]pi[/N]`.
pub fn parse_real(token: &str) -> Result<f64, String> {
    let token = token.trim();
    let (negative, body) = match token.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, token),
    };
    if let Some(rest) = body.strip_prefix("pi") {
        let value = if rest.is_empty() {
            std::f64::consts::PI
        } else if let Some(div) = rest.strip_prefix('/') {
            let d: f64 = div
                .trim()
                .parse()
                .map_err(|_| format!("bad divisor in `{token}`"))?;
            if d == 2.0 {
                std::f64::consts::FRAC_PI_2
            } else {
                std::f64::consts::PI / d
            }
        } else {
            return Err(format!("cannot parse `{token}`"));
        };
        return Ok(if negative { -value } else { value });
    }
    let v: f64 = token
        .parse()
        .map_err(|_| format!("cannot parse `{token}` as a number"))?;
    if !v.is_finite() {
        return Err(format!("`{token}` is not finite"));
    }
    Ok(v)
}
