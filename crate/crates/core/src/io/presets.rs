//! Built-in scenarios, loaded from `presets.toml`.
//!
//! The source parameters of the `paper-*` presets are fitted by
//! [`crate::calibrate::calibrate`], not measured; the fit is pinned by a
//! test that reruns it.

use std::sync::OnceLock;

use crate::io::config::{parse_scenario_set, ConfigError, Scenario};

pub const PRESETS_TOML: &str = include_str!("presets.toml");

pub const PAPER_T60: &str = "paper-T60";
pub const PAPER_T140: &str = "paper-T140";
pub const IDEAL: &str = "ideal";
pub const BACKGROUND_ONLY: &str = "background-only";
pub const CLASSICAL_TWIN: &str = "classical-twin";

pub fn all() -> &'static [Scenario] {
    static PRESETS: OnceLock<Vec<Scenario>> = OnceLock::new();
    PRESETS.get_or_init(|| parse_scenario_set(PRESETS_TOML).expect("built-in presets are valid"))
}

pub fn get(name: &str) -> Result<Scenario, ConfigError> {
    all()
        .iter()
        .find(|s| s.name == name)
        .cloned()
        .ok_or_else(|| {
            let names: Vec<&str> = all().iter().map(|s| s.name.as_str()).collect();
            ConfigError::Invalid(format!("unknown preset `{name}` (one of {})", names.join(", ")))
        })
}
