//! Experiment configuration: flat INI-style `key = value` pairs under
//! `[map]`, `[loop]`, `[trigger]` and `[run]` sections, `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::error::SpecError;
use crate::escore::{LoopSpec, MapSpec};
use crate::trigger::TriggerSpec;

/// Bundled configuration reproducing the reference simulation study.
pub const REFERENCE_CFG: &str = include_str!("../configs/reference.cfg");

pub const REQUIRED_KEYS: &[&str] = &[
    "map.q_star",
    "map.h_star",
    "map.theta_star",
    "loop.amplitude_a",
    "loop.omega",
    "loop.epsilon",
    "loop.gain_k",
    "trigger.sigma",
    "trigger.alpha",
    "run.theta_hat0",
    "run.n_iters",
];

pub const OPTIONAL_KEYS: &[&str] = &["run.mode", "run.offset_constant", "run.out"];

/// Keys a sweep may vary.
pub const SWEEPABLE_KEYS: &[&str] = &[
    "map.q_star",
    "map.h_star",
    "map.theta_star",
    "loop.amplitude_a",
    "loop.omega",
    "loop.epsilon",
    "loop.gain_k",
    "trigger.sigma",
    "trigger.alpha",
    "run.theta_hat0",
    "run.n_iters",
    "run.offset_constant",
];

pub const DEFAULT_OFFSET_CONSTANT: f64 = 0.30;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("{key}: cannot parse `{value}` as {expected}")]
    Malformed {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Invalid(#[from] SpecError),
    #[error("{key} must {constraint}")]
    Constraint { key: String, constraint: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    TrueLoop,
    Average,
    Both,
}

impl Mode {
    pub fn runs_true_loop(self) -> bool {
        matches!(self, Mode::TrueLoop | Mode::Both)
    }

    pub fn runs_average(self) -> bool {
        matches!(self, Mode::Average | Mode::Both)
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "true-loop" => Ok(Mode::TrueLoop),
            "average" => Ok(Mode::Average),
            "both" => Ok(Mode::Both),
            other => Err(format!("unknown mode `{other}` (expected true-loop, average or both)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::TrueLoop => "true-loop",
            Mode::Average => "average",
            Mode::Both => "both",
        })
    }
}

/// Raw `section.key -> value` pairs, kept around so sweeps can override a
/// single key and revalidate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                let name = name.trim();
                if !["map", "loop", "trigger", "run"].contains(&name) {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: format!("unknown section `[{name}]`"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let Some(section) = &section else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: "key outside of any section".to_string(),
                });
            };
            let full = format!("{section}.{}", key.trim());
            if !REQUIRED_KEYS.contains(&full.as_str()) && !OPTIONAL_KEYS.contains(&full.as_str()) {
                return Err(ConfigError::UnknownKey { line: line_no, key: full });
            }
            if entries.insert(full.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError::DuplicateKey { line: line_no, key: full });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn number(&self, key: &str) -> Result<f64, ConfigError> {
        let value = self.get(key).unwrap_or_default();
        value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ConfigError::Malformed {
                key: key.to_string(),
                value: value.to_string(),
                expected: "a finite number",
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub map: MapSpec,
    pub lp: LoopSpec,
    pub trig: TriggerSpec,
    pub theta_hat0: f64,
    pub n_iters: usize,
    pub mode: Mode,
    pub offset_constant: f64,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let missing: Vec<String> = REQUIRED_KEYS
            .iter()
            .filter(|k| raw.get(k).is_none())
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(ConfigError::Missing(missing));
        }

        let map = MapSpec::new(
            raw.number("map.q_star")?,
            raw.number("map.h_star")?,
            raw.number("map.theta_star")?,
        )?;
        let lp = LoopSpec::new(
            raw.number("loop.amplitude_a")?,
            raw.number("loop.omega")?,
            raw.number("loop.epsilon")?,
            raw.number("loop.gain_k")?,
        )?;
        let trig = TriggerSpec::new(raw.number("trigger.sigma")?, raw.number("trigger.alpha")?)?;
        let theta_hat0 = raw.number("run.theta_hat0")?;

        let iters_text = raw.get("run.n_iters").unwrap_or_default();
        let n_iters: usize = iters_text.parse().map_err(|_| ConfigError::Malformed {
            key: "run.n_iters".to_string(),
            value: iters_text.to_string(),
            expected: "a positive integer",
        })?;
        if n_iters == 0 {
            return Err(ConfigError::Constraint {
                key: "run.n_iters".to_string(),
                constraint: "be at least 1",
            });
        }

        let mode = match raw.get("run.mode") {
            None => Mode::Both,
            Some(text) => text.parse().map_err(|_| ConfigError::Malformed {
                key: "run.mode".to_string(),
                value: text.to_string(),
                expected: "one of true-loop, average, both",
            })?,
        };
        let offset_constant = match raw.get("run.offset_constant") {
            None => DEFAULT_OFFSET_CONSTANT,
            Some(_) => raw.number("run.offset_constant")?,
        };
        if offset_constant < 0.0 {
            return Err(ConfigError::Constraint {
                key: "run.offset_constant".to_string(),
                constraint: "be non-negative",
            });
        }
        let out_dir = raw.get("run.out").filter(|s| !s.is_empty()).map(PathBuf::from);

        Ok(Self { map, lp, trig, theta_hat0, n_iters, mode, offset_constant, out_dir })
    }

    /// Parameter error of the averaged loop's starting point.
    pub fn theta_tilde0(&self) -> f64 {
        self.theta_hat0 - self.map.theta_star()
    }

    pub fn reference() -> Self {
        parse_config(REFERENCE_CFG).expect("bundled configuration is valid")
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ExperimentConfig::from_raw(&RawConfig::parse(text)?)
}

/// Resolves a sweep parameter given either as `section.key` or as a bare key
/// that is unique across sections.
pub fn resolve_sweep_key(name: &str) -> Option<&'static str> {
    if let Some(key) = SWEEPABLE_KEYS.iter().find(|k| **k == name) {
        return Some(key);
    }
    let mut bare = SWEEPABLE_KEYS
        .iter()
        .filter(|k| k.split_once('.').is_some_and(|(_, b)| b == name));
    match (bare.next(), bare.next()) {
        (Some(key), None) => Some(key),
        _ => None,
    }
}
