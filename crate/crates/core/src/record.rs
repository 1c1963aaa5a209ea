//! Domain types for one decoded surveillance row.
//!
//! Raw catalog codes for the care, ICU, intubation and lab-result cells are kept
//! verbatim on [`PatientRecord`]; their meaning is resolved by the classifier
//! through the active [`SchemaConfig`](crate::schema::SchemaConfig). Sex, the
//! indigenous-speaker flag and comorbidity flags are decoded at ingest time.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// A coded yes/no/unknown cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TriState {
    Yes,
    No,
    Unspecified,
}

impl TriState {
    pub const ALL: [TriState; 3] = [TriState::Yes, TriState::No, TriState::Unspecified];

    pub fn label(self) -> &'static str {
        match self {
            TriState::Yes => "Yes",
            TriState::No => "No",
            TriState::Unspecified => "Unspecified",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
    Unspecified,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::Female, Sex::Male, Sex::Unspecified];

    pub fn label(self) -> &'static str {
        match self {
            Sex::Female => "Female",
            Sex::Male => "Male",
            Sex::Unspecified => "Unspecified",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Care modality: home isolation or hospital admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CareStatus {
    Ambulatory,
    Hospitalized,
    Unspecified,
}

impl CareStatus {
    pub const ALL: [CareStatus; 3] = [
        CareStatus::Ambulatory,
        CareStatus::Hospitalized,
        CareStatus::Unspecified,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CareStatus::Ambulatory => "Ambulatory",
            CareStatus::Hospitalized => "Hospitalized",
            CareStatus::Unspecified => "Unspecified",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

macro_rules! label_from_str {
    ($ty:ty, $what:literal) => {
        impl FromStr for $ty {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label() == s)
                    .ok_or_else(|| UnknownLabel {
                        what: $what,
                        label: s.to_string(),
                    })
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

label_from_str!(TriState, "yes/no value");
label_from_str!(Sex, "sex");
label_from_str!(CareStatus, "care status");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {what} label {label:?}")]
pub struct UnknownLabel {
    pub what: &'static str,
    pub label: String,
}

/// INEGI federal entity code, 1..=32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StateCode(u8);

pub const STATE_COUNT: usize = 32;

const STATE_NAMES: [&str; STATE_COUNT] = [
    "Aguascalientes",
    "Baja California",
    "Baja California Sur",
    "Campeche",
    "Chiapas",
    "Chihuahua",
    "Ciudad de México",
    "Coahuila de Zaragoza",
    "Colima",
    "Durango",
    "Guanajuato",
    "Guerrero",
    "Hidalgo",
    "Jalisco",
    "México",
    "Michoacán de Ocampo",
    "Morelos",
    "Nayarit",
    "Nuevo León",
    "Oaxaca",
    "Puebla",
    "Querétaro",
    "Quintana Roo",
    "San Luis Potosí",
    "Sinaloa",
    "Sonora",
    "Tabasco",
    "Tamaulipas",
    "Tlaxcala",
    "Veracruz de Ignacio de la Llave",
    "Yucatán",
    "Zacatecas",
];

impl StateCode {
    pub fn new(code: u8) -> Option<Self> {
        (1..=STATE_COUNT as u8).contains(&code).then_some(StateCode(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    /// Zero-based position, for dense tables.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < STATE_COUNT, "state index {index} out of range");
        StateCode(index as u8 + 1)
    }

    pub fn name(self) -> &'static str {
        STATE_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = StateCode> {
        (1..=STATE_COUNT as u8).map(StateCode)
    }
}

impl TryFrom<u8> for StateCode {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        StateCode::new(code).ok_or_else(|| format!("state code {code} outside 1..=32"))
    }
}

impl From<StateCode> for u8 {
    fn from(code: StateCode) -> u8 {
        code.0
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// State plus optional municipality (`None` when the source marks it unknown).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    pub state: StateCode,
    pub municipality: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Comorbidity {
    Diabetes,
    Hypertension,
    Obesity,
    Pneumonia,
    Copd,
    Asthma,
    Immunosuppression,
    Cardiovascular,
    RenalChronic,
    Smoking,
    Other,
}

pub const COMORBIDITY_COUNT: usize = 11;

impl Comorbidity {
    pub const ALL: [Comorbidity; COMORBIDITY_COUNT] = [
        Comorbidity::Diabetes,
        Comorbidity::Hypertension,
        Comorbidity::Obesity,
        Comorbidity::Pneumonia,
        Comorbidity::Copd,
        Comorbidity::Asthma,
        Comorbidity::Immunosuppression,
        Comorbidity::Cardiovascular,
        Comorbidity::RenalChronic,
        Comorbidity::Smoking,
        Comorbidity::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Comorbidity::Diabetes => "diabetes",
            Comorbidity::Hypertension => "hypertension",
            Comorbidity::Obesity => "obesity",
            Comorbidity::Pneumonia => "pneumonia",
            Comorbidity::Copd => "copd",
            Comorbidity::Asthma => "asthma",
            Comorbidity::Immunosuppression => "immunosuppression",
            Comorbidity::Cardiovascular => "cardiovascular",
            Comorbidity::RenalChronic => "renal_chronic",
            Comorbidity::Smoking => "smoking",
            Comorbidity::Other => "other_comorbidity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Comorbidity flag-name → value, stored densely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Comorbidities([TriState; COMORBIDITY_COUNT]);

impl Default for Comorbidities {
    fn default() -> Self {
        Comorbidities([TriState::Unspecified; COMORBIDITY_COUNT])
    }
}

impl Comorbidities {
    pub fn get(&self, which: Comorbidity) -> TriState {
        self.0[which.index()]
    }

    pub fn set(&mut self, which: Comorbidity, value: TriState) {
        self.0[which.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Comorbidity, TriState)> + '_ {
        Comorbidity::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub record_id: String,
    pub sex: Sex,
    pub age: u16,
    pub residence: RegionKey,
    pub reporting_state: StateCode,
    pub patient_type_code: String,
    pub icu_code: String,
    pub intubated_code: String,
    pub lab_result_code: String,
    pub death_date: Option<NaiveDate>,
    pub symptom_onset_date: Option<NaiveDate>,
    pub indigenous_speaker: TriState,
    pub case_contact: TriState,
    pub travel_history: TriState,
    pub comorbidities: Comorbidities,
}

/// Semantic fields a schema maps onto CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    RecordId,
    Sex,
    Age,
    ResidenceState,
    ResidenceMunicipality,
    ReportingState,
    PatientType,
    Icu,
    Intubated,
    LabResult,
    DeathDate,
    SymptomOnsetDate,
    IndigenousSpeaker,
    CaseContact,
    TravelHistory,
    Comorbidity(Comorbidity),
}

impl Field {
    /// Every field, in the order rows are parsed.
    pub fn all() -> impl Iterator<Item = Field> {
        [
            Field::RecordId,
            Field::Sex,
            Field::Age,
            Field::ResidenceState,
            Field::ResidenceMunicipality,
            Field::ReportingState,
            Field::PatientType,
            Field::Icu,
            Field::Intubated,
            Field::LabResult,
            Field::DeathDate,
            Field::SymptomOnsetDate,
            Field::IndigenousSpeaker,
            Field::CaseContact,
            Field::TravelHistory,
        ]
        .into_iter()
        .chain(Comorbidity::ALL.into_iter().map(Field::Comorbidity))
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::RecordId => "record_id",
            Field::Sex => "sex",
            Field::Age => "age",
            Field::ResidenceState => "residence_state",
            Field::ResidenceMunicipality => "residence_municipality",
            Field::ReportingState => "reporting_state",
            Field::PatientType => "patient_type",
            Field::Icu => "icu",
            Field::Intubated => "intubated",
            Field::LabResult => "lab_result",
            Field::DeathDate => "death_date",
            Field::SymptomOnsetDate => "symptom_onset_date",
            Field::IndigenousSpeaker => "indigenous_speaker",
            Field::CaseContact => "case_contact",
            Field::TravelHistory => "travel_history",
            Field::Comorbidity(c) => c.name(),
        }
    }

    /// Fields that can never be marked absent.
    pub fn is_required(self) -> bool {
        matches!(
            self,
            Field::RecordId | Field::Age | Field::ReportingState | Field::LabResult
        )
    }

    /// Fields decoded through a yes/no catalog.
    pub fn is_tri_state(self) -> bool {
        matches!(
            self,
            Field::Icu
                | Field::Intubated
                | Field::IndigenousSpeaker
                | Field::CaseContact
                | Field::TravelHistory
                | Field::Comorbidity(_)
        )
    }
}

impl FromStr for Field {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::all().find(|f| f.name() == s).ok_or_else(|| UnknownLabel {
            what: "field",
            label: s.to_string(),
        })
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_codes_cover_the_federation() {
        assert_eq!(StateCode::all().count(), 32);
        assert!(StateCode::new(0).is_none());
        assert!(StateCode::new(33).is_none());
        assert_eq!(StateCode::new(17).unwrap().name(), "Morelos");
        assert_eq!(StateCode::from_index(0).code(), 1);
    }

    #[test]
    fn field_names_round_trip() {
        for field in Field::all() {
            assert_eq!(field.name().parse::<Field>().unwrap(), field);
        }
        assert!("nonsense".parse::<Field>().is_err());
        assert_eq!(Field::all().count(), 15 + COMORBIDITY_COUNT);
    }

    #[test]
    fn labels_parse() {
        assert_eq!("Yes".parse::<TriState>().unwrap(), TriState::Yes);
        assert_eq!("Hospitalized".parse::<CareStatus>().unwrap(), CareStatus::Hospitalized);
        assert!("yes".parse::<TriState>().is_err());
    }
}
