//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "paper-T60"
//! description = "free text"
//!
//! [source]          # SourceParams; bg1, bg2, leak2 default to 0
//! p = 0.01
//! zeta = 0.6
//! eta1 = 0.15
//! eta2 = 0.15
//!
//! [timing]          # TrialTiming, every key required
//! trial_period_ns = 4000.0
//! # ...
//!
//! [run]             # optional
//! seed = 7
//! dead_time_ns = 0.0
//! splitter = "pair"
//!
//! [analysis]        # optional
//! offset_trials = 10
//! bin_width_ns = 2.0
//! plan = "standard"
//! ```
//!
//! Several scenarios can share one file as a `[[scenario]]` array with the
//! same layout (`[scenario.source]`, ...). Unknown keys are errors.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{RunConfig, SplitterMode, TrialTiming};
use crate::stats::SourceParams;
use crate::tia::{ChannelPlan, TiaSettings, DEFAULT_BIN_WIDTH_NS, DEFAULT_OFFSET_TRIALS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("missing required section `{0}`")]
    MissingSection(&'static str),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("syntax: {0}")]
    Syntax(String),
    #[error("{0}")]
    Invalid(String),
    #[error("duplicate scenario name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    /// See [`ChannelPlan::standard`].
    #[default]
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_offset_trials")]
    pub offset_trials: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width_ns: f64,
    #[serde(default)]
    pub plan: PlanKind,
}

fn default_offset_trials() -> usize {
    DEFAULT_OFFSET_TRIALS
}

fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH_NS
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            offset_trials: DEFAULT_OFFSET_TRIALS,
            bin_width_ns: DEFAULT_BIN_WIDTH_NS,
            plan: PlanKind::Standard,
        }
    }
}

impl AnalysisConfig {
    pub fn tia(&self) -> TiaSettings {
        TiaSettings {
            offset_trials: self.offset_trials,
            bin_width_ns: self.bin_width_ns,
        }
    }

    pub fn channel_plan(&self, timing: &TrialTiming) -> ChannelPlan {
        match self.plan {
            PlanKind::Standard => ChannelPlan::standard(timing),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub run: RunConfig,
    pub analysis: AnalysisConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::Invalid("name: must not be empty".into()));
        }
        self.run
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.run.seed > i64::MAX as u64 {
            return Err(ConfigError::Invalid(format!(
                "run.seed: {} exceeds {}",
                self.run.seed,
                i64::MAX
            )));
        }
        self.analysis
            .tia()
            .binning(self.run.timing.trial_period_ns)
            .map_err(|e| ConfigError::Invalid(format!("analysis: {e}")))?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.run.timing.trials = trials;
        self
    }

    /// SHA-256 over the canonical serialization of the whole scenario.
    pub fn digest(&self) -> String {
        hex_sha256(serialize_config(self).as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    dead_time_ns: f64,
    #[serde(default)]
    splitter: SplitterMode,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            dead_time_ns: 0.0,
            splitter: SplitterMode::Pair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    #[serde(default)]
    description: String,
    source: SourceParams,
    timing: TrialTiming,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    analysis: AnalysisConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSetDoc {
    scenario: Vec<ScenarioDoc>,
}

impl From<ScenarioDoc> for Scenario {
    fn from(d: ScenarioDoc) -> Self {
        Scenario {
            name: d.name,
            description: d.description,
            run: RunConfig {
                source: d.source,
                timing: d.timing,
                seed: d.run.seed,
                dead_time_ns: d.run.dead_time_ns,
                splitter: d.run.splitter,
            },
            analysis: d.analysis,
        }
    }
}

impl From<&Scenario> for ScenarioDoc {
    fn from(s: &Scenario) -> Self {
        ScenarioDoc {
            name: s.name.clone(),
            description: s.description.clone(),
            source: s.run.source,
            timing: s.run.timing,
            run: RunSection {
                seed: s.run.seed,
                dead_time_ns: s.run.dead_time_ns,
                splitter: s.run.splitter,
            },
            analysis: s.analysis,
        }
    }
}

fn classify(e: toml::de::Error) -> ConfigError {
    let msg = e.message().to_string();
    if msg.contains("unknown field") || msg.contains("unknown variant") {
        ConfigError::UnknownKey(msg)
    } else {
        ConfigError::Syntax(e.to_string().replace('\n', " "))
    }
}

fn check_sections(table: &toml::Table) -> Result<(), ConfigError> {
    for section in ["source", "timing"] {
        if !table.get(section).is_some_and(toml::Value::is_table) {
            return Err(ConfigError::MissingSection(section));
        }
    }
    if !table.contains_key("name") {
        return Err(ConfigError::MissingKey("name"));
    }
    Ok(())
}

/// Parses and validates a single-scenario document.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(classify)?;
    check_sections(&table)?;
    let doc: ScenarioDoc = toml::from_str(text).map_err(classify)?;
    let scenario = Scenario::from(doc);
    scenario.validate()?;
    Ok(scenario)
}

/// Parses a `[[scenario]]` array; names must be unique.
pub fn parse_scenario_set(text: &str) -> Result<Vec<Scenario>, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(classify)?;
    let entries = table
        .get("scenario")
        .and_then(toml::Value::as_array)
        .ok_or(ConfigError::MissingSection("scenario"))?;
    for entry in entries {
        let t = entry
            .as_table()
            .ok_or_else(|| ConfigError::Syntax("`scenario` entries must be tables".into()))?;
        check_sections(t)?;
    }
    let doc: ScenarioSetDoc = toml::from_str(text).map_err(classify)?;
    let mut out: Vec<Scenario> = Vec::with_capacity(doc.scenario.len());
    for d in doc.scenario {
        let s = Scenario::from(d);
        if out.iter().any(|o| o.name == s.name) {
            return Err(ConfigError::DuplicateName(s.name));
        }
        s.validate()
            .map_err(|e| ConfigError::Invalid(format!("scenario `{}`: {e}", s.name)))?;
        out.push(s);
    }
    Ok(out)
}

pub fn serialize_config(s: &Scenario) -> String {
    toml::to_string(&ScenarioDoc::from(s)).expect("scenario is always serializable")
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Digest identifying the configuration that generated an event stream.
pub fn run_digest(cfg: &RunConfig) -> String {
    hex_sha256(
        toml::to_string(cfg)
            .expect("run config is always serializable")
            .as_bytes(),
    )
}
