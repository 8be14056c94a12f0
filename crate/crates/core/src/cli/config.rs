//! Scenario files: TOML documents whose tables mirror [`ScenarioConfig`].
//! Errors point at the offending key and, when it can be found, its line.

use std::fmt;
use std::path::Path;

use crate::simulator::ScenarioConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDiagnostic {
    /// Dotted key the problem is attached to, when known.
    pub key: Option<String>,
    /// 1-based line number in the scenario file, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "line {l}: `{k}`: {}", self.message),
            (Some(k), None) => write!(f, "`{k}`: {}", self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigDiagnostic {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Finds the line defining a dotted key such as `prediction.split_s`, either
/// as `key = ...` inside the matching table or as a dotted key at top level.
/// Returns the table header's line when only the table is present.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    let key = key.split('[').next().unwrap_or(key);
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == key || (current == table && header_line.is_none()) {
                header_line = Some(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        let full = if current.is_empty() {
            lhs.to_string()
        } else {
            format!("{current}.{lhs}")
        };
        if full == key || (current == table && lhs == leaf) {
            return Some(i + 1);
        }
    }
    header_line
}

/// Pulls the field name out of serde messages such as "unknown field `foo`".
fn quoted_name(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigDiagnostic> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().trim().to_string();
        let line = e.span().map(|s| line_of(text, s.start));
        let key = if message.contains("unknown field") || message.contains("missing field") {
            quoted_name(&message)
        } else {
            None
        };
        ConfigDiagnostic { key, line, message }
    })?;
    cfg.validate().map_err(|e| ConfigDiagnostic {
        line: locate_key(text, &e.key),
        key: Some(e.key),
        message: e.reason,
    })?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigDiagnostic> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigDiagnostic {
        key: None,
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_scenario(&text)
}

/// The TOML form of a scenario, e.g. to export a built-in preset.
pub fn to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario is always representable")
}
