//! Reference tables by brute force.
//!
//! Every cell is its own full scan over the records, with the status rules
//! written out again from scratch. Nothing here may use the pipeline's
//! classifier or aggregator; only the record, schema and table types are
//! shared. A test in this module enforces that.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use cohort_core::record::{CareStatus, Comorbidity, Field, PatientRecord, Sex, TriState};
use cohort_core::schema::{decode_code, SchemaConfig};
use cohort_core::table::{Cell, Rate, ReportKind, ReportTable, UnknownKind};

/// Record selection, mirrored independently of the pipeline's filter type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleFilter {
    pub indigenous_only: bool,
    pub states: Option<BTreeSet<u8>>,
    /// `(residence state, municipality)` pairs.
    pub municipalities: Option<BTreeSet<(u8, Option<u16>)>>,
    pub date_window: Option<(NaiveDate, NaiveDate)>,
    /// Attribute records to their residence state instead of the reporting state.
    pub by_residence: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Result3 {
    Positive,
    Negative,
    Pending,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Unit {
    Icu,
    NoIcu,
    Unknown,
    None,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tube {
    Yes,
    No,
    Unknown,
    None,
}

struct Labelled<'a> {
    record: &'a PatientRecord,
    result: Result3,
    care: CareStatus,
    icu: Unit,
    tube: Tube,
    dead: bool,
    state: u8,
}

fn label<'a>(r: &'a PatientRecord, schema: &SchemaConfig, by_residence: bool) -> Labelled<'a> {
    let code = r.lab_result_code.trim().to_string();
    let result = if schema.positive_codes().iter().any(|c| *c == code) {
        Result3::Positive
    } else if schema.negative_codes().iter().any(|c| *c == code) {
        Result3::Negative
    } else {
        Result3::Pending
    };
    let care = decode_code(schema.patient_type_catalog(), &r.patient_type_code);
    let mut icu = Unit::None;
    if care == CareStatus::Hospitalized {
        icu = match decode_code(schema.flag_catalog(Field::Icu), &r.icu_code) {
            TriState::Yes => Unit::Icu,
            TriState::No => Unit::NoIcu,
            TriState::Unspecified => Unit::Unknown,
        };
    }
    let mut tube = Tube::None;
    if icu == Unit::Icu {
        tube = match decode_code(schema.flag_catalog(Field::Intubated), &r.intubated_code) {
            TriState::Yes => Tube::Yes,
            TriState::No => Tube::No,
            TriState::Unspecified => Tube::Unknown,
        };
    }
    let state = if by_residence {
        r.residence.state.code()
    } else {
        r.reporting_state.code()
    };
    Labelled {
        record: r,
        result,
        care,
        icu,
        tube,
        dead: r.death_date.is_some(),
        state,
    }
}

fn keep(r: &PatientRecord, f: &OracleFilter) -> bool {
    if f.indigenous_only && r.indigenous_speaker != TriState::Yes {
        return false;
    }
    if let Some(states) = &f.states {
        let s = if f.by_residence {
            r.residence.state.code()
        } else {
            r.reporting_state.code()
        };
        if !states.contains(&s) {
            return false;
        }
    }
    if let Some(m) = &f.municipalities {
        if !m.contains(&(r.residence.state.code(), r.residence.municipality)) {
            return false;
        }
    }
    if let Some((a, b)) = f.date_window {
        match r.symptom_onset_date {
            Some(d) if a <= d && d <= b => {}
            _ => return false,
        }
    }
    true
}

/// `100 * num / den` to two decimals, half-up: floor, then compare the remainder.
fn percent(num: u64, den: u64) -> Rate {
    if den == 0 {
        return Rate::Undefined;
    }
    let scaled = num as u128 * 10_000;
    let den = den as u128;
    let mut q = scaled / den;
    if (scaled % den) * 2 >= den {
        q += 1;
    }
    Rate::from_hundredths(q as u64)
}

struct Scan<'a> {
    rows: Vec<Labelled<'a>>,
}

impl Scan<'_> {
    fn count(&self, pred: impl Fn(&Labelled) -> bool) -> u64 {
        let mut n = 0;
        for r in &self.rows {
            if pred(r) {
                n += 1;
            }
        }
        n
    }
}

fn sex_columns(scan: &Scan, pred: impl Fn(&Labelled) -> bool) -> Vec<(&'static str, Option<Sex>)> {
    let mut cols = vec![("Women", Some(Sex::Female)), ("Men", Some(Sex::Male))];
    if scan.count(|r| pred(r) && r.record.sex == Sex::Unspecified) > 0 {
        cols.push(("Unspecified", Some(Sex::Unspecified)));
    }
    cols.push(("Total", None));
    cols
}

fn care_columns(scan: &Scan, pred: impl Fn(&Labelled) -> bool) -> Vec<(&'static str, Option<CareStatus>)> {
    let mut cols = vec![
        ("Ambulatory", Some(CareStatus::Ambulatory)),
        ("Hospitalized", Some(CareStatus::Hospitalized)),
    ];
    if scan.count(|r| pred(r) && r.care == CareStatus::Unspecified) > 0 {
        cols.push(("Unspecified", Some(CareStatus::Unspecified)));
    }
    cols.push(("Total", None));
    cols
}

const RESULTS: [(&str, Option<Result3>); 4] = [
    ("Positive", Some(Result3::Positive)),
    ("Negative", Some(Result3::Negative)),
    ("Pending", Some(Result3::Pending)),
    ("Total", None),
];

fn labels(cols: &[(&str, impl Copy)]) -> Vec<String> {
    cols.iter().map(|(l, _)| l.to_string()).collect()
}

pub fn oracle_counts_named(
    records: &[PatientRecord],
    schema: &SchemaConfig,
    kind: &str,
    filter: &OracleFilter,
) -> Result<ReportTable, UnknownKind> {
    Ok(oracle_counts(records, schema, kind.parse()?, filter))
}

pub fn oracle_counts(
    records: &[PatientRecord],
    schema: &SchemaConfig,
    kind: ReportKind,
    filter: &OracleFilter,
) -> ReportTable {
    let scan = Scan {
        rows: records
            .iter()
            .filter(|r| keep(r, filter))
            .map(|r| label(r, schema, filter.by_residence))
            .collect(),
    };
    let all = |_: &Labelled| true;
    match kind {
        ReportKind::ResultBySex => {
            let cols = sex_columns(&scan, all);
            let mut t = ReportTable::new(kind, "Result", labels(&cols));
            for (name, res) in RESULTS {
                let cells = cols
                    .iter()
                    .map(|(_, sex)| {
                        Cell::Count(scan.count(|r| {
                            res.is_none_or(|x| r.result == x) && sex.is_none_or(|s| r.record.sex == s)
                        }))
                    })
                    .collect();
                t.push_row(name, cells);
            }
            t
        }
        ReportKind::CareByResult => {
            let cols = care_columns(&scan, all);
            let mut t = ReportTable::new(kind, "Result", labels(&cols));
            for (name, res) in RESULTS {
                let cells = cols
                    .iter()
                    .map(|(_, care)| {
                        Cell::Count(scan.count(|r| {
                            res.is_none_or(|x| r.result == x) && care.is_none_or(|c| r.care == c)
                        }))
                    })
                    .collect();
                t.push_row(name, cells);
            }
            t
        }
        ReportKind::CareBySex => {
            let cols = care_columns(&scan, all);
            let rows = sex_columns(&scan, all);
            let mut t = ReportTable::new(kind, "Sex", labels(&cols));
            for (name, sex) in rows {
                let cells = cols
                    .iter()
                    .map(|(_, care)| {
                        Cell::Count(scan.count(|r| {
                            sex.is_none_or(|s| r.record.sex == s) && care.is_none_or(|c| r.care == c)
                        }))
                    })
                    .collect();
                t.push_row(name, cells);
            }
            t
        }
        ReportKind::IcuAmongHospitalizedPositives => {
            let base = |r: &Labelled| r.result == Result3::Positive && r.care == CareStatus::Hospitalized;
            let mut cols = vec![("ICU", Some(Unit::Icu)), ("No ICU", Some(Unit::NoIcu))];
            if scan.count(|r| base(r) && r.icu == Unit::Unknown) > 0 {
                cols.push(("Unspecified", Some(Unit::Unknown)));
            }
            cols.push(("Total", None));
            let mut t = ReportTable::new(kind, "Patient type", labels(&cols));
            let cells = cols
                .iter()
                .map(|(_, u)| Cell::Count(scan.count(|r| base(r) && u.is_none_or(|u| r.icu == u))))
                .collect();
            t.push_row("Hospitalized", cells);
            t
        }
        ReportKind::IntubationAmongIcu => {
            let base = |r: &Labelled| {
                r.result == Result3::Positive && r.care == CareStatus::Hospitalized && r.icu == Unit::Icu
            };
            let mut cols = vec![("Intubated", Some(Tube::Yes)), ("Not intubated", Some(Tube::No))];
            if scan.count(|r| base(r) && r.tube == Tube::Unknown) > 0 {
                cols.push(("Unspecified", Some(Tube::Unknown)));
            }
            cols.push(("Total", None));
            let mut t = ReportTable::new(kind, "Patient type", labels(&cols));
            let cells = cols
                .iter()
                .map(|(_, x)| Cell::Count(scan.count(|r| base(r) && x.is_none_or(|x| r.tube == x))))
                .collect();
            t.push_row("Hospitalized ICU", cells);
            t
        }
        ReportKind::DeathsSummary => {
            let died = |r: &Labelled| r.result == Result3::Positive && r.dead;
            let cols = sex_columns(&scan, died);
            let mut t = ReportTable::new(kind, "Patient type", labels(&cols));
            let mut deaths = Vec::new();
            let mut intubated = Vec::new();
            for (_, sex) in &cols {
                let of_sex = |r: &Labelled| sex.is_none_or(|s| r.record.sex == s);
                deaths.push(scan.count(|r| died(r) && of_sex(r)));
                intubated.push(scan.count(|r| died(r) && of_sex(r) && r.icu == Unit::Icu && r.tube == Tube::Yes));
            }
            t.push_row("Deceased positives", deaths.iter().map(|n| Cell::Count(*n)).collect());
            t.push_row(
                "Deceased positives in ICU with intubation",
                intubated.iter().map(|n| Cell::Count(*n)).collect(),
            );
            t.push_row(
                "% in ICU with intubation",
                intubated.iter().zip(&deaths).map(|(a, b)| Cell::Rate(percent(*a, *b))).collect(),
            );
            t
        }
        ReportKind::FatalityByState => {
            let mut t = ReportTable::new(
                kind,
                "State",
                vec!["Deaths".into(), "Positives".into(), "Case fatality rate".into()],
            );
            for s in 1..=32u8 {
                let p = scan.count(|r| r.state == s && r.result == Result3::Positive);
                let d = scan.count(|r| r.state == s && r.result == Result3::Positive && r.dead);
                t.push_row(s.to_string(), vec![Cell::Count(d), Cell::Count(p), Cell::Rate(percent(d, p))]);
            }
            let p = scan.count(|r| r.result == Result3::Positive);
            let d = scan.count(|r| r.result == Result3::Positive && r.dead);
            t.push_row("Total", vec![Cell::Count(d), Cell::Count(p), Cell::Rate(percent(d, p))]);
            t
        }
        ReportKind::ComorbidityFrequencies => {
            let mut t = ReportTable::new(
                kind,
                "Comorbidity",
                vec!["Yes".into(), "No".into(), "Unspecified".into(), "Total".into(), "% Yes".into()],
            );
            let base = |r: &Labelled| r.result == Result3::Positive && r.care == CareStatus::Hospitalized;
            for c in Comorbidity::ALL {
                let has = |r: &Labelled, v: TriState| base(r) && r.record.comorbidities.get(c) == v;
                let yes = scan.count(|r| has(r, TriState::Yes));
                let no = scan.count(|r| has(r, TriState::No));
                let unspecified = scan.count(|r| has(r, TriState::Unspecified));
                let total = scan.count(base);
                t.push_row(
                    c.name(),
                    vec![
                        Cell::Count(yes),
                        Cell::Count(no),
                        Cell::Count(unspecified),
                        Cell::Count(total),
                        Cell::Rate(percent(yes, total)),
                    ],
                );
            }
            t
        }
    }
}
