//! Simulation configuration: the two spaces with their trust models and
//! capabilities, shared services, and tunables. Loaded from JSON and
//! validated before a world is built from it.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::{ClearingHouse, CONTEXT_FREE_RULES, KNOWN_RULES};
use crate::registry::SpaceDefinition;
use crate::semantics::SemanticModel;
use crate::world::{CaSetup, World, WorldSetup};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config field {field}: {message}")]
    Semantic { field: String, message: String },
}

fn semantic(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Semantic {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub spaces: Vec<SpaceDefinition>,
    #[serde(default)]
    pub clearing_houses: Vec<ClearingHouse>,
    pub certificate_authorities: Vec<CaSetup>,
    #[serde(default = "default_true")]
    pub broker_available: bool,
    #[serde(default = "default_threshold")]
    pub index_suggest_threshold: f64,
    #[serde(default)]
    pub preloaded_models: Vec<SemanticModel>,
}

fn default_true() -> bool {
    true
}

fn default_threshold() -> f64 {
    0.5
}

impl SimulationConfig {
    /// Validate cross-references and ranges. The gap matrix compares exactly
    /// two spaces, so the config must define exactly two.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.spaces.len() != 2 {
            return Err(semantic(
                "spaces",
                format!("exactly 2 spaces required, found {}", self.spaces.len()),
            ));
        }
        let mut space_ids = BTreeSet::new();
        for space in &self.spaces {
            if !space_ids.insert(space.space_id.clone()) {
                return Err(semantic("spaces", format!("duplicate space_id {}", space.space_id)));
            }
            if space.token_ttl_seconds == 0 {
                return Err(semantic(
                    "token_ttl_seconds",
                    format!("space {} must have a positive token TTL", space.space_id),
                ));
            }
            for rule in &space.validation_policy {
                if !KNOWN_RULES.contains(&rule.as_str()) {
                    return Err(semantic(
                        "validation_policy",
                        format!("space {} references unknown rule {rule}", space.space_id),
                    ));
                }
            }
        }

        let mut ch_ids = BTreeSet::new();
        for ch in &self.clearing_houses {
            if !ch_ids.insert(ch.id.clone()) {
                return Err(semantic("clearing_houses", format!("duplicate id {}", ch.id)));
            }
            if ch.validation_rules.is_empty() {
                return Err(semantic(
                    "clearing_houses",
                    format!("{} must list at least one rule", ch.id),
                ));
            }
            for rule in &ch.validation_rules {
                if !CONTEXT_FREE_RULES.contains(&rule.as_str()) {
                    return Err(semantic(
                        "clearing_houses",
                        format!("{} cannot run space-specific rule {rule}", ch.id),
                    ));
                }
            }
            for space in &ch.recognized_by {
                if !space_ids.contains(space) {
                    return Err(semantic(
                        "clearing_houses",
                        format!("{} recognized_by unknown space {space}", ch.id),
                    ));
                }
            }
        }

        let mut ca_ids = BTreeSet::new();
        for ca in &self.certificate_authorities {
            if !ca_ids.insert(ca.ca_id.clone()) {
                return Err(semantic(
                    "certificate_authorities",
                    format!("duplicate ca_id {}", ca.ca_id),
                ));
            }
        }
        if ca_ids.is_empty() {
            return Err(semantic("certificate_authorities", "at least one CA required"));
        }

        for space in &self.spaces {
            if !ca_ids.contains(&space.issuing_ca) {
                return Err(semantic(
                    "issuing_ca",
                    format!("space {} references unknown CA {}", space.space_id, space.issuing_ca),
                ));
            }
            for ca in &space.trusted_cas {
                if !ca_ids.contains(ca) {
                    return Err(semantic(
                        "trusted_cas",
                        format!("space {} trusts unknown CA {ca}", space.space_id),
                    ));
                }
            }
            for ch in &space.recognized_clearing_houses {
                if !ch_ids.contains(ch) {
                    return Err(semantic(
                        "recognized_clearing_houses",
                        format!("space {} references unknown clearing house {ch}", space.space_id),
                    ));
                }
            }
            for foreign in &space.recognized_foreign_frameworks {
                if !space_ids.contains(foreign) {
                    return Err(semantic(
                        "recognized_foreign_frameworks",
                        format!("space {} recognizes unknown space {foreign}", space.space_id),
                    ));
                }
            }
        }

        if !(0.0..=1.0).contains(&self.index_suggest_threshold) {
            return Err(semantic(
                "index_suggest_threshold",
                "must be within [0, 1]",
            ));
        }

        let mut model_keys = BTreeSet::new();
        for model in &self.preloaded_models {
            if !space_ids.contains(&model.space_id) {
                return Err(semantic(
                    "preloaded_models",
                    format!("model {} references unknown space {}", model.model_id, model.space_id),
                ));
            }
            if !model_keys.insert((model.space_id.clone(), model.model_id.clone(), model.version)) {
                return Err(semantic(
                    "preloaded_models",
                    format!("duplicate model ({}, v{})", model.model_id, model.version),
                ));
            }
        }
        Ok(())
    }

    pub fn space(&self, space_id: &str) -> Option<&SpaceDefinition> {
        self.spaces.iter().find(|s| s.space_id == space_id)
    }

    pub fn to_setup(&self) -> WorldSetup {
        WorldSetup {
            spaces: self.spaces.clone(),
            clearing_houses: self.clearing_houses.clone(),
            certificate_authorities: self.certificate_authorities.clone(),
            broker_available: self.broker_available,
            index_suggest_threshold: self.index_suggest_threshold,
            preloaded_models: self.preloaded_models.clone(),
        }
    }

    pub fn build_world(&self, seed: u64) -> World {
        World::new(self.to_setup(), seed)
    }
}

pub fn parse_config(text: &str) -> Result<SimulationConfig, ConfigError> {
    let config: SimulationConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimulationConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config(&text)
}
