//! Column mapping, coded catalogs and lab-result code sets.
//!
//! A [`SchemaConfig`] is the contract between a raw CSV snapshot and the domain
//! model. It is loaded from TOML (see `profiles/dge_default.toml` for the
//! shipped profile) and validated once; after that, every lookup is total.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Deserialize;

use crate::record::{CareStatus, Field, Sex, TriState};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("field {0} has no column mapping and is not marked absent")]
    UnmappedField(String),
    #[error("field {0} is required and cannot be marked absent")]
    RequiredFieldAbsent(String),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("column {column:?} is mapped to both {first} and {second}")]
    DuplicateColumn {
        column: String,
        first: String,
        second: String,
    },
    #[error("lab-result code {code:?} appears in both the {first} and {second} sets")]
    OverlappingCodes {
        code: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("catalog {catalog}: {message}")]
    Catalog { catalog: String, message: String },
    #[error("missing yes_no catalog needed by field {0}")]
    MissingCatalog(String),
    #[error("suspect rule {rule}: {message}")]
    Rule { rule: String, message: String },
}

/// Where a semantic field comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Column(String),
    Absent,
}

impl ColumnRef {
    pub fn column(&self) -> Option<&str> {
        match self {
            ColumnRef::Column(name) => Some(name),
            ColumnRef::Absent => None,
        }
    }
}

/// Raw code → meaning, with a default for anything unlisted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogTable<M> {
    entries: BTreeMap<String, M>,
    default: M,
}

impl<M: Copy + PartialEq> CatalogTable<M> {
    pub fn new(entries: BTreeMap<String, M>, default: M) -> Self {
        CatalogTable { entries, default }
    }

    pub fn entries(&self) -> &BTreeMap<String, M> {
        &self.entries
    }

    pub fn default_meaning(&self) -> M {
        self.default
    }

    /// First code (in code order) whose meaning is `meaning`.
    pub fn code_for(&self, meaning: M) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, m)| **m == meaning)
            .map(|(code, _)| code.as_str())
    }
}

/// Total lookup: listed code, else the catalog default. Surrounding whitespace is ignored.
pub fn decode_code<M: Copy>(catalog: &CatalogTable<M>, code: &str) -> M {
    catalog
        .entries
        .get(code.trim())
        .copied()
        .unwrap_or(catalog.default)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed date {0:?}")]
pub struct MalformedDate(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaConfig {
    columns: BTreeMap<Field, ColumnRef>,
    sex: CatalogTable<Sex>,
    patient_type: CatalogTable<CareStatus>,
    flags: BTreeMap<Field, CatalogTable<TriState>>,
    municipality_unspecified: BTreeSet<String>,
    date_sentinels: Vec<String>,
    date_format: String,
    positive_codes: BTreeSet<String>,
    negative_codes: BTreeSet<String>,
    pending_codes: BTreeSet<String>,
}

impl SchemaConfig {
    pub fn column(&self, field: Field) -> &ColumnRef {
        // validated at construction: every field has an entry
        &self.columns[&field]
    }

    pub fn is_absent(&self, field: Field) -> bool {
        matches!(self.column(field), ColumnRef::Absent)
    }

    /// Mapped (field, column) pairs in parse order.
    pub fn mapped_columns(&self) -> impl Iterator<Item = (Field, &str)> {
        self.columns
            .iter()
            .filter_map(|(f, c)| c.column().map(|name| (*f, name)))
    }

    pub fn sex_catalog(&self) -> &CatalogTable<Sex> {
        &self.sex
    }

    pub fn patient_type_catalog(&self) -> &CatalogTable<CareStatus> {
        &self.patient_type
    }

    /// Catalog for a yes/no field. Panics for fields that are not yes/no coded.
    pub fn flag_catalog(&self, field: Field) -> &CatalogTable<TriState> {
        self.flags
            .get(&field)
            .unwrap_or_else(|| panic!("{field} is not a yes/no field"))
    }

    pub fn is_unspecified_municipality(&self, code: &str) -> bool {
        self.municipality_unspecified.contains(code.trim())
    }

    pub fn unspecified_municipality_codes(&self) -> &BTreeSet<String> {
        &self.municipality_unspecified
    }

    /// Primary sentinel first, then aliases.
    pub fn date_sentinels(&self) -> &[String] {
        &self.date_sentinels
    }

    pub fn date_format(&self) -> &str {
        &self.date_format
    }

    pub fn positive_codes(&self) -> &BTreeSet<String> {
        &self.positive_codes
    }

    pub fn negative_codes(&self) -> &BTreeSet<String> {
        &self.negative_codes
    }

    pub fn pending_codes(&self) -> &BTreeSet<String> {
        &self.pending_codes
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ProfileFile = toml::from_str(text)?;
        SchemaConfig::from_file(file.schema)
    }

    pub(crate) fn from_file(raw: SchemaFile) -> Result<Self, ConfigError> {
        let mut columns = BTreeMap::new();
        let mut seen_columns: BTreeMap<String, Field> = BTreeMap::new();
        for (name, spec) in &raw.columns {
            let field = Field::from_str(name).map_err(|_| ConfigError::UnknownField(name.clone()))?;
            let column = match spec {
                RawColumn::Name(col) => {
                    if let Some(prev) = seen_columns.insert(col.clone(), field) {
                        return Err(ConfigError::DuplicateColumn {
                            column: col.clone(),
                            first: prev.name().to_string(),
                            second: field.name().to_string(),
                        });
                    }
                    ColumnRef::Column(col.clone())
                }
                RawColumn::Marker { absent: true } => {
                    if field.is_required() {
                        return Err(ConfigError::RequiredFieldAbsent(name.clone()));
                    }
                    ColumnRef::Absent
                }
                RawColumn::Marker { absent: false } => {
                    return Err(ConfigError::UnmappedField(name.clone()));
                }
            };
            columns.insert(field, column);
        }
        if let Some(missing) = Field::all().find(|f| !columns.contains_key(f)) {
            return Err(ConfigError::UnmappedField(missing.name().to_string()));
        }

        let sex = typed_catalog::<Sex>("sex", raw.catalogs.get("sex"))?;
        let patient_type = typed_catalog::<CareStatus>("patient_type", raw.catalogs.get("patient_type"))?;

        let shared = raw
            .catalogs
            .get("yes_no")
            .map(|c| typed_catalog::<TriState>("yes_no", Some(c)))
            .transpose()?;
        let mut flags = BTreeMap::new();
        for field in Field::all().filter(|f| f.is_tri_state()) {
            let table = match raw.catalogs.get(field.name()) {
                Some(own) => typed_catalog::<TriState>(field.name(), Some(own))?,
                None => shared
                    .clone()
                    .ok_or_else(|| ConfigError::MissingCatalog(field.name().to_string()))?,
            };
            flags.insert(field, table);
        }
        for name in raw.catalogs.keys() {
            let known = matches!(name.as_str(), "sex" | "patient_type" | "yes_no")
                || Field::from_str(name).map(Field::is_tri_state).unwrap_or(false);
            if !known {
                return Err(ConfigError::Catalog {
                    catalog: name.clone(),
                    message: "no field uses this catalog".into(),
                });
            }
        }

        let mut date_sentinels = vec![raw.dates.sentinel.trim().to_string()];
        date_sentinels.extend(raw.dates.sentinel_aliases.iter().map(|s| s.trim().to_string()));

        let trim_set = |codes: &[String]| codes.iter().map(|c| c.trim().to_string()).collect::<BTreeSet<_>>();
        let positive_codes = trim_set(&raw.lab_result.positive);
        let negative_codes = trim_set(&raw.lab_result.negative);
        let pending_codes = trim_set(&raw.lab_result.pending);
        check_disjoint(&positive_codes, "positive", &negative_codes, "negative")?;
        check_disjoint(&positive_codes, "positive", &pending_codes, "pending")?;
        check_disjoint(&negative_codes, "negative", &pending_codes, "pending")?;

        Ok(SchemaConfig {
            columns,
            sex,
            patient_type,
            flags,
            municipality_unspecified: trim_set(&raw.municipality.unspecified_codes),
            date_sentinels,
            date_format: raw.dates.format,
            positive_codes,
            negative_codes,
            pending_codes,
        })
    }
}

fn check_disjoint(
    a: &BTreeSet<String>,
    a_name: &'static str,
    b: &BTreeSet<String>,
    b_name: &'static str,
) -> Result<(), ConfigError> {
    match a.intersection(b).next() {
        Some(code) => Err(ConfigError::OverlappingCodes {
            code: code.clone(),
            first: a_name,
            second: b_name,
        }),
        None => Ok(()),
    }
}

fn typed_catalog<M>(name: &str, raw: Option<&RawCatalog>) -> Result<CatalogTable<M>, ConfigError>
where
    M: Copy + PartialEq + FromStr,
    M::Err: std::fmt::Display,
{
    let raw = raw.ok_or_else(|| ConfigError::Catalog {
        catalog: name.to_string(),
        message: "catalog is missing".into(),
    })?;
    let parse = |label: &str| {
        label.parse::<M>().map_err(|e| ConfigError::Catalog {
            catalog: name.to_string(),
            message: e.to_string(),
        })
    };
    let default = parse(&raw.default)?;
    let mut entries = BTreeMap::new();
    for (code, label) in &raw.entries {
        entries.insert(code.trim().to_string(), parse(label)?);
    }
    Ok(CatalogTable::new(entries, default))
}

/// Reads a date cell. The configured sentinel (or any alias) means "no date".
pub fn parse_death_date(cell: &str, schema: &SchemaConfig) -> Result<Option<NaiveDate>, MalformedDate> {
    let cell = cell.trim();
    if schema.date_sentinels.iter().any(|s| s == cell) {
        return Ok(None);
    }
    NaiveDate::parse_from_str(cell, &schema.date_format)
        .map(Some)
        .map_err(|_| MalformedDate(cell.to_string()))
}

#[derive(Debug, Deserialize)]
pub(crate) struct ProfileFile {
    #[serde(flatten)]
    pub schema: SchemaFile,
    #[serde(default)]
    pub suspect_rules: Option<crate::classify::RawRuleSet>,
}

#[derive(Debug, Deserialize)]
pub(crate) struct SchemaFile {
    pub dates: RawDates,
    pub lab_result: RawLabResult,
    #[serde(default)]
    pub municipality: RawMunicipality,
    pub columns: BTreeMap<String, RawColumn>,
    pub catalogs: BTreeMap<String, RawCatalog>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawDates {
    pub sentinel: String,
    #[serde(default)]
    pub sentinel_aliases: Vec<String>,
    pub format: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawLabResult {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    #[serde(default)]
    pub pending: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawMunicipality {
    #[serde(default)]
    pub unspecified_codes: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub(crate) enum RawColumn {
    Name(String),
    Marker { absent: bool },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawCatalog {
    pub default: String,
    #[serde(default)]
    pub entries: BTreeMap<String, String>,
}
