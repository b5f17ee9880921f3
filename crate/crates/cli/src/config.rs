//! Run configuration: flat `key = value` text with `[section]` headers, or
//! the same structure as JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

/// Raw config: section name (empty for the top level) to key/value pairs.
/// Each value remembers the line it came from, 0 for JSON input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) if *l > 0 => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(l), None) if *l > 0 => write!(f, "line {l}: {}", self.message),
            (_, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_ini(text)
        }
    }

    pub fn parse_ini(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(ConfigError::at_line(line_no, "unterminated section header"));
                };
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::at_line(line_no, "empty section name"));
                }
                section = name.to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::at_line(line_no, format!("expected `key = value`, got `{line}`")));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::at_line(line_no, "empty key"));
            }
            let entry = cfg.sections.entry(section.clone()).or_default();
            if entry.contains_key(k) {
                return Err(ConfigError { line: Some(line_no), key: Some(k.into()), message: "duplicate key".into() });
            }
            entry.insert(k.to_string(), (v.trim().to_string(), line_no));
        }
        Ok(cfg)
    }

    pub fn parse_json(text: &str) -> Result<Self, ConfigError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::at_line(e.line(), e.to_string()))?;
        let serde_json::Value::Object(top) = v else {
            return Err(ConfigError::at_line(1, "top level must be an object"));
        };
        let mut cfg = RawConfig::default();
        for (k, v) in top {
            match v {
                serde_json::Value::Object(inner) => {
                    let sec = cfg.sections.entry(k.clone()).or_default();
                    for (ik, iv) in inner {
                        sec.insert(ik.clone(), (json_scalar(&iv).map_err(|m| key_err(&format!("{k}.{ik}"), m))?, 0));
                    }
                }
                other => {
                    let s = json_scalar(&other).map_err(|m| key_err(&k, m))?;
                    cfg.sections.entry(String::new()).or_default().insert(k, (s, 0));
                }
            }
        }
        Ok(cfg)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|(v, _)| v.as_str())
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.into()).or_default().insert(key.into(), (value.into(), 0));
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.sections.get(section)?.get(key).map(|(_, l)| *l)
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.line(section, key), key: Some(qualified(section, key)), message: message.into() }
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            Some(v) => v.parse().map_err(|e: T::Err| self.err(section, key, format!("cannot parse `{v}`: {e}"))),
            None => Err(ConfigError { line: None, key: Some(qualified(section, key)), message: "missing required key".into() }),
        }
    }

    pub fn optional<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        if self.get(section, key).is_some() {
            self.require(section, key)
        } else {
            Ok(default)
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.get(section, key) else {
            return Err(ConfigError { line: None, key: Some(qualified(section, key)), message: "missing required key".into() });
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: T::Err| self.err(section, key, format!("cannot parse `{s}`: {e}"))))
            .collect()
    }

    /// Wrap a downstream validation failure with the key that caused it.
    pub fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        self.err(section, key, message)
    }

    /// Keys as a nested map, for provenance records.
    pub fn echo(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        self.sections
            .iter()
            .map(|(s, kv)| (s.clone(), kv.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect()))
            .collect()
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn key_err(key: &str, message: String) -> ConfigError {
    ConfigError { line: None, key: Some(key.into()), message }
}

fn json_scalar(v: &serde_json::Value) -> Result<String, String> {
    use serde_json::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => {
            let parts: Result<Vec<String>, String> = items.iter().map(json_scalar).collect();
            Ok(parts?.join(", "))
        }
        Value::Null => Err("null is not a value".into()),
        Value::Object(_) => Err("sections cannot nest".into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Evolve,
    EchoLindblad,
    EchoKraus,
    EchoParam,
    EchoCombined,
    Circuit,
    Theory,
    Fit,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "evolve" => Command::Evolve,
            "echo-lindblad" => Command::EchoLindblad,
            "echo-kraus" => Command::EchoKraus,
            "echo-param" => Command::EchoParam,
            "echo-combined" => Command::EchoCombined,
            "circuit" => Command::Circuit,
            "theory" => Command::Theory,
            "fit" => Command::Fit,
            other => return Err(format!("unknown command `{other}`")),
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Evolve => "evolve",
            Command::EchoLindblad => "echo-lindblad",
            Command::EchoKraus => "echo-kraus",
            Command::EchoParam => "echo-param",
            Command::EchoCombined => "echo-combined",
            Command::Circuit => "circuit",
            Command::Theory => "theory",
            Command::Fit => "fit",
        };
        f.write_str(s)
    }
}
