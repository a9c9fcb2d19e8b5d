//! Combined run configuration: one TOML file with optional `[env]`, `[dr]`,
//! `[ppo]` and `[setter]` tables. Omitted tables and keys take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::PpoConfig;
use crate::dr::DrConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::setter::SetterConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub dr: DrConfig,
    pub ppo: PpoConfig,
    pub setter: SetterConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| Error::Parse { source_name: source_name.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.dr.validate()?;
        self.ppo.validate()?;
        self.setter.validate()
    }
}
