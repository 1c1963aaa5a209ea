//! Per-patient labels: lab result, care modality, ICU, intubation, vital
//! status and suspect-case type.
//!
//! ICU is only asked of hospitalized patients and intubation only of ICU
//! patients; outside those branches the label is `NotApplicable`. Source rows
//! that report intubation outside the ICU keep that fact in
//! [`Classification::intubated_outside_icu`].

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::record::{CareStatus, Field, PatientRecord, Sex, TriState};
use crate::schema::{decode_code, ConfigError, SchemaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    Positive,
    Negative,
    Pending,
}

impl TestStatus {
    pub const ALL: [TestStatus; 3] = [TestStatus::Positive, TestStatus::Negative, TestStatus::Pending];

    pub fn label(self) -> &'static str {
        match self {
            TestStatus::Positive => "Positive",
            TestStatus::Negative => "Negative",
            TestStatus::Pending => "Pending",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IcuStatus {
    InIcu,
    NotInIcu,
    NotApplicable,
    Unspecified,
}

impl IcuStatus {
    pub const ALL: [IcuStatus; 4] = [
        IcuStatus::InIcu,
        IcuStatus::NotInIcu,
        IcuStatus::NotApplicable,
        IcuStatus::Unspecified,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntubationStatus {
    Intubated,
    NotIntubated,
    NotApplicable,
    Unspecified,
}

impl IntubationStatus {
    pub const ALL: [IntubationStatus; 4] = [
        IntubationStatus::Intubated,
        IntubationStatus::NotIntubated,
        IntubationStatus::NotApplicable,
        IntubationStatus::Unspecified,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VitalStatus {
    Deceased,
    NotRecordedDeceased,
}

impl VitalStatus {
    pub const ALL: [VitalStatus; 2] = [VitalStatus::Deceased, VitalStatus::NotRecordedDeceased];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SuspectType {
    Type1,
    Type2,
    Type3,
    NotSuspect,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Classification {
    pub test_status: TestStatus,
    pub care_status: CareStatus,
    pub icu_status: IcuStatus,
    pub intubation_status: IntubationStatus,
    pub vital_status: VitalStatus,
    pub suspect_type: SuspectType,
    /// The row says "intubated" but the patient is not classified as in the ICU.
    pub intubated_outside_icu: bool,
}

impl Classification {
    /// Both gating rules hold.
    pub fn is_gated(&self) -> bool {
        let icu_ok = (self.care_status == CareStatus::Hospitalized)
            == (self.icu_status != IcuStatus::NotApplicable);
        let intubation_ok = (self.icu_status == IcuStatus::InIcu)
            == (self.intubation_status != IntubationStatus::NotApplicable);
        icu_ok && intubation_ok
    }
}

pub fn classify_test_status(record: &PatientRecord, schema: &SchemaConfig) -> TestStatus {
    let code = record.lab_result_code.trim();
    if schema.positive_codes().contains(code) {
        TestStatus::Positive
    } else if schema.negative_codes().contains(code) {
        TestStatus::Negative
    } else {
        TestStatus::Pending
    }
}

pub fn classify_care(record: &PatientRecord, schema: &SchemaConfig) -> CareStatus {
    decode_code(schema.patient_type_catalog(), &record.patient_type_code)
}

pub fn classify_icu(record: &PatientRecord, care: CareStatus, schema: &SchemaConfig) -> IcuStatus {
    if care != CareStatus::Hospitalized {
        return IcuStatus::NotApplicable;
    }
    match decode_code(schema.flag_catalog(Field::Icu), &record.icu_code) {
        TriState::Yes => IcuStatus::InIcu,
        TriState::No => IcuStatus::NotInIcu,
        TriState::Unspecified => IcuStatus::Unspecified,
    }
}

pub fn classify_intubation(
    record: &PatientRecord,
    icu: IcuStatus,
    schema: &SchemaConfig,
) -> IntubationStatus {
    if icu != IcuStatus::InIcu {
        return IntubationStatus::NotApplicable;
    }
    match decode_code(schema.flag_catalog(Field::Intubated), &record.intubated_code) {
        TriState::Yes => IntubationStatus::Intubated,
        TriState::No => IntubationStatus::NotIntubated,
        TriState::Unspecified => IntubationStatus::Unspecified,
    }
}

pub fn is_deceased(record: &PatientRecord) -> VitalStatus {
    if record.death_date.is_some() {
        VitalStatus::Deceased
    } else {
        VitalStatus::NotRecordedDeceased
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOp {
    Eq,
    Ne,
    In,
}

/// One `(field, op, value)` test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub field: Field,
    pub op: RuleOp,
    pub values: Vec<String>,
}

impl Condition {
    /// `None` when the field is absent from the schema.
    fn evaluate(&self, record: &PatientRecord, schema: &SchemaConfig) -> Option<bool> {
        if schema.is_absent(self.field) {
            return None;
        }
        let actual = field_value(self.field, record, schema);
        let hit = self.values.contains(&actual);
        Some(match self.op {
            RuleOp::Eq | RuleOp::In => hit,
            RuleOp::Ne => !hit,
        })
    }
}

/// Conjunction of conditions. An empty predicate never matches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Predicate {
    pub conditions: Vec<Condition>,
}

impl Predicate {
    fn evaluate(&self, record: &PatientRecord, schema: &SchemaConfig) -> Option<bool> {
        if self.conditions.is_empty() {
            return Some(false);
        }
        let mut all = true;
        for condition in &self.conditions {
            all &= condition.evaluate(record, schema)?;
        }
        Some(all)
    }

    fn fields(&self) -> impl Iterator<Item = Field> + '_ {
        self.conditions.iter().map(|c| c.field)
    }
}

/// Suspect-case typing rules, evaluated Type1, Type2, Type3 with first match winning.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuspectRuleSet {
    pub type1: Predicate,
    pub type2: Predicate,
    pub type3: Predicate,
}

impl SuspectRuleSet {
    pub fn fields(&self) -> impl Iterator<Item = Field> + '_ {
        self.type1
            .fields()
            .chain(self.type2.fields())
            .chain(self.type3.fields())
    }
}

pub fn classify_suspect_type(
    record: &PatientRecord,
    rules: &SuspectRuleSet,
    schema: &SchemaConfig,
) -> SuspectType {
    let ordered = [
        (&rules.type1, SuspectType::Type1),
        (&rules.type2, SuspectType::Type2),
        (&rules.type3, SuspectType::Type3),
    ];
    for (predicate, kind) in ordered {
        match predicate.evaluate(record, schema) {
            None => return SuspectType::Indeterminate,
            Some(true) => return kind,
            Some(false) => {}
        }
    }
    SuspectType::NotSuspect
}

pub fn classify_patient(
    record: &PatientRecord,
    schema: &SchemaConfig,
    rules: &SuspectRuleSet,
) -> Classification {
    let test_status = classify_test_status(record, schema);
    let care_status = classify_care(record, schema);
    let icu_status = classify_icu(record, care_status, schema);
    let intubation_status = classify_intubation(record, icu_status, schema);
    let intubated_outside_icu = icu_status != IcuStatus::InIcu
        && decode_code(schema.flag_catalog(Field::Intubated), &record.intubated_code) == TriState::Yes;
    Classification {
        test_status,
        care_status,
        icu_status,
        intubation_status,
        vital_status: is_deceased(record),
        suspect_type: classify_suspect_type(record, rules, schema),
        intubated_outside_icu,
    }
}

/// The comparable text of a field: decoded label, or the decimal code for numeric fields.
fn field_value(field: Field, record: &PatientRecord, schema: &SchemaConfig) -> String {
    match field {
        Field::Sex => record.sex.label().to_string(),
        Field::Age => record.age.to_string(),
        Field::ResidenceState => record.residence.state.to_string(),
        Field::ResidenceMunicipality => record
            .residence
            .municipality
            .map_or_else(|| "Unspecified".to_string(), |m| m.to_string()),
        Field::ReportingState => record.reporting_state.to_string(),
        Field::PatientType => classify_care(record, schema).label().to_string(),
        Field::Icu => decode_code(schema.flag_catalog(Field::Icu), &record.icu_code)
            .label()
            .to_string(),
        Field::Intubated => decode_code(schema.flag_catalog(Field::Intubated), &record.intubated_code)
            .label()
            .to_string(),
        Field::LabResult => classify_test_status(record, schema).label().to_string(),
        Field::IndigenousSpeaker => record.indigenous_speaker.label().to_string(),
        Field::CaseContact => record.case_contact.label().to_string(),
        Field::TravelHistory => record.travel_history.label().to_string(),
        Field::Comorbidity(c) => record.comorbidities.get(c).label().to_string(),
        Field::RecordId | Field::DeathDate | Field::SymptomOnsetDate => {
            unreachable!("rules over {field} are rejected at load")
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawRuleSet {
    #[serde(default)]
    type1: Vec<RawCondition>,
    #[serde(default)]
    type2: Vec<RawCondition>,
    #[serde(default)]
    type3: Vec<RawCondition>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCondition {
    field: String,
    op: String,
    value: RawValue,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawValue {
    One(String),
    Many(Vec<String>),
}

impl RawRuleSet {
    pub(crate) fn resolve(&self) -> Result<SuspectRuleSet, ConfigError> {
        Ok(SuspectRuleSet {
            type1: resolve_predicate("type1", &self.type1)?,
            type2: resolve_predicate("type2", &self.type2)?,
            type3: resolve_predicate("type3", &self.type3)?,
        })
    }
}

fn resolve_predicate(rule: &str, raw: &[RawCondition]) -> Result<Predicate, ConfigError> {
    let err = |message: String| ConfigError::Rule {
        rule: rule.to_string(),
        message,
    };
    let mut conditions = Vec::with_capacity(raw.len());
    for c in raw {
        let field = Field::from_str(&c.field).map_err(|e| err(e.to_string()))?;
        if matches!(field, Field::RecordId | Field::DeathDate | Field::SymptomOnsetDate) {
            return Err(err(format!("field {field} cannot be used in a rule")));
        }
        let (op, values) = match (c.op.as_str(), &c.value) {
            ("eq", RawValue::One(v)) => (RuleOp::Eq, vec![v.clone()]),
            ("ne", RawValue::One(v)) => (RuleOp::Ne, vec![v.clone()]),
            ("in", RawValue::Many(vs)) => (RuleOp::In, vs.clone()),
            ("in", RawValue::One(v)) => (RuleOp::In, vec![v.clone()]),
            ("eq" | "ne", RawValue::Many(_)) => {
                return Err(err(format!("op {} takes a single value", c.op)))
            }
            (other, _) => return Err(err(format!("unknown op {other:?}; expected eq, ne or in"))),
        };
        for value in &values {
            check_value(field, value).map_err(err)?;
        }
        conditions.push(Condition { field, op, values });
    }
    Ok(Predicate { conditions })
}

fn check_value(field: Field, value: &str) -> Result<(), String> {
    let ok = match field {
        Field::Sex => value.parse::<Sex>().is_ok(),
        Field::PatientType => value.parse::<CareStatus>().is_ok(),
        Field::LabResult => TestStatus::ALL.iter().any(|t| t.label() == value),
        Field::Age | Field::ResidenceState | Field::ReportingState => value.parse::<u16>().is_ok(),
        Field::ResidenceMunicipality => value == "Unspecified" || value.parse::<u16>().is_ok(),
        f if f.is_tri_state() => value.parse::<TriState>().is_ok(),
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("value {value:?} is not valid for field {field}"))
    }
}
