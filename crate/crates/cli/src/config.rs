//! Run configuration: a TOML file, overridden field by field by flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use cohort_core::aggregate::{CohortFilter, RegionBasis};
use cohort_core::ingest::Encoding;
use cohort_core::record::StateCode;
use cohort_core::table::ReportKind;
use serde::de::{self, Deserializer};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Keys accepted in a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub kinds: Option<Vec<String>>,
    pub indigenous_only: Option<bool>,
    pub states: Option<Vec<u8>>,
    #[serde(default, deserialize_with = "date")]
    pub onset_from: Option<NaiveDate>,
    #[serde(default, deserialize_with = "date")]
    pub onset_to: Option<NaiveDate>,
    pub boundaries: Option<PathBuf>,
    pub join_key: Option<String>,
    pub workers: Option<usize>,
    pub region_basis: Option<String>,
    pub encoding: Option<String>,
    pub error_cap: Option<usize>,
    pub seed: Option<u64>,
    pub rows: Option<u64>,
    pub spec: Option<PathBuf>,
    pub preset: Option<String>,
    pub file_name: Option<String>,
}

/// Accepts a TOML local date (`2020-03-01`) or the same text quoted.
fn date<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<NaiveDate>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Native(toml::value::Datetime),
        Text(String),
    }
    let text = match Raw::deserialize(deserializer)? {
        Raw::Native(d) if d.time.is_none() && d.offset.is_none() => d.to_string(),
        Raw::Native(d) => return Err(de::Error::custom(format!("{d} is not a plain date"))),
        Raw::Text(t) => t,
    };
    text.parse().map(Some).map_err(|e| de::Error::custom(format!("date {text:?}: {e}")))
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }
}

pub const DEFAULT_JOIN_KEY: &str = "CVE_ENT";

/// Everything `report` needs, after merging file and flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub input: PathBuf,
    /// `None` selects the bundled profile.
    pub schema: Option<PathBuf>,
    pub out: PathBuf,
    pub kinds: Vec<ReportKind>,
    pub filter: CohortFilter,
    pub boundaries: Option<PathBuf>,
    pub join_key: String,
    pub workers: usize,
    pub basis: RegionBasis,
    pub encoding: Encoding,
    pub error_cap: usize,
}

pub fn parse_kinds(items: &[String]) -> Result<Vec<ReportKind>, ConfigError> {
    let mut kinds = BTreeSet::new();
    for item in items.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        if item == "all" {
            kinds.extend(ReportKind::ALL);
        } else {
            kinds.insert(item.parse::<ReportKind>().map_err(|e| ConfigError::Invalid(e.to_string()))?);
        }
    }
    if kinds.is_empty() {
        kinds.extend(ReportKind::ALL);
    }
    Ok(kinds.into_iter().collect())
}

pub fn parse_states(codes: &[u8]) -> Result<BTreeSet<StateCode>, ConfigError> {
    codes
        .iter()
        .map(|c| StateCode::new(*c).ok_or_else(|| ConfigError::Invalid(format!("state code {c} is not 1..=32"))))
        .collect()
}

pub fn parse_encoding(text: &str) -> Result<Encoding, ConfigError> {
    text.parse().map_err(ConfigError::Invalid)
}

pub fn parse_basis(text: &str) -> Result<RegionBasis, ConfigError> {
    text.parse().map_err(ConfigError::Invalid)
}

pub fn build_filter(
    indigenous_only: bool,
    states: Option<&[u8]>,
    onset_from: Option<NaiveDate>,
    onset_to: Option<NaiveDate>,
) -> Result<CohortFilter, ConfigError> {
    let date_window = match (onset_from, onset_to) {
        (None, None) => None,
        (from, to) => {
            let from = from.unwrap_or(NaiveDate::MIN);
            let to = to.unwrap_or(NaiveDate::MAX);
            if from > to {
                return Err(ConfigError::Invalid(format!("onset window {from}..{to} is empty")));
            }
            Some((from, to))
        }
    };
    Ok(CohortFilter {
        indigenous_only,
        states: states.map(parse_states).transpose()?,
        municipalities: None,
        date_window,
    })
}
