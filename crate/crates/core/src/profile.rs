use std::path::Path;

use crate::classify::SuspectRuleSet;
use crate::schema::{ConfigError, ProfileFile, SchemaConfig};

const DGE_DEFAULT: &str = include_str!("../profiles/dge_default.toml");

/// Schema plus suspect-case rules, loaded from one TOML file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub schema: SchemaConfig,
    pub rules: SuspectRuleSet,
}

impl Profile {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ProfileFile = toml::from_str(text)?;
        let schema = SchemaConfig::from_file(file.schema)?;
        let rules = file.suspect_rules.unwrap_or_default().resolve()?;
        Ok(Profile { schema, rules })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Profile::from_toml_str(&text)
    }

    /// The shipped profile for the Mexican open COVID-19 dataset.
    pub fn default_dge() -> Self {
        Profile::from_toml_str(DGE_DEFAULT).expect("bundled profile is valid")
    }

    pub fn default_dge_text() -> &'static str {
        DGE_DEFAULT
    }
}
