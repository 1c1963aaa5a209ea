use std::collections::BTreeMap;
use std::path::Path;

use cohort_core::ingest::RowErrorKind;
use serde::{Deserialize, Serialize};

use crate::plan::MarginalPlan;

/// One raw code and its relative weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weighted {
    pub code: String,
    pub weight: u32,
}

fn w(pairs: &[(&str, u32)]) -> Vec<Weighted> {
    pairs
        .iter()
        .map(|(code, weight)| Weighted {
            code: code.to_string(),
            weight: *weight,
        })
        .collect()
}

/// Categorical weights over raw codes for fields the plan does not pin.
/// The defaults cover the shipped profile's whole code space, including the
/// ignored/unknown codes and one code outside every catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldWeights {
    pub sex: Vec<Weighted>,
    pub patient_type: Vec<Weighted>,
    pub icu: Vec<Weighted>,
    pub intubated: Vec<Weighted>,
    pub lab_result: Vec<Weighted>,
    pub indigenous_speaker: Vec<Weighted>,
    pub case_contact: Vec<Weighted>,
    pub travel_history: Vec<Weighted>,
    pub comorbidity: Vec<Weighted>,
    /// Reporting states 1..=32 drawn uniformly when empty.
    pub states: Vec<Weighted>,
    /// Chance, in thousandths, that residence differs from the reporting state.
    pub moved_per_mille: u32,
    /// Chance, in thousandths, of a death date when vital status is not planted.
    pub death_per_mille: u32,
    /// Municipality codes are drawn from 1..=municipalities.
    pub municipalities: u16,
    /// Chance, in thousandths, of an unspecified municipality code.
    pub unspecified_municipality_per_mille: u32,
    pub age_max: u16,
}

impl Default for FieldWeights {
    fn default() -> Self {
        let yes_no = w(&[("1", 3), ("2", 6), ("97", 1), ("98", 1), ("99", 1)]);
        FieldWeights {
            sex: w(&[("1", 10), ("2", 10), ("99", 1)]),
            patient_type: w(&[("1", 6), ("2", 3), ("99", 1)]),
            icu: yes_no.clone(),
            intubated: yes_no.clone(),
            lab_result: w(&[("1", 5), ("2", 4), ("3", 2), ("4", 1)]),
            indigenous_speaker: w(&[("1", 2), ("2", 8), ("99", 1)]),
            case_contact: yes_no.clone(),
            travel_history: yes_no.clone(),
            comorbidity: yes_no,
            states: Vec::new(),
            moved_per_mille: 100,
            death_per_mille: 80,
            municipalities: 40,
            unspecified_municipality_per_mille: 20,
            age_max: 110,
        }
    }
}

/// Everything needed to produce one synthetic dataset deterministically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub rows: u64,
    #[serde(default)]
    pub weights: FieldWeights,
    #[serde(default)]
    pub plan: Option<MarginalPlan>,
    /// Exact number of rows to corrupt per error kind, on distinct rows.
    #[serde(default)]
    pub faults: BTreeMap<RowErrorKind, u64>,
}

impl GeneratorSpec {
    pub fn new(seed: u64, rows: u64) -> Self {
        GeneratorSpec {
            seed,
            rows,
            weights: FieldWeights::default(),
            plan: None,
            faults: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, crate::SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| crate::SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(GeneratorSpec::from_toml_str(&text)?)
    }

    pub fn total_faults(&self) -> u64 {
        self.faults.values().sum()
    }
}
