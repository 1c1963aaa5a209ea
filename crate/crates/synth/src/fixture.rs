//! A planted dataset for the indigenous-language-speaker cohort of the
//! August 2020 snapshot: test result by sex, care by result and by sex, ICU
//! and intubation among hospitalized positives, deaths, and positives and
//! deaths per state. Non-speaker rows are added with random attributes so
//! the cohort filter has something to exclude.

use std::collections::BTreeMap;

use crate::plan::{Attribute, MarginalGroup, MarginalPlan, MarginalTable, PlanStep};
use crate::spec::GeneratorSpec;

const BY_STATE: &str = include_str!("../data/indigenous_fatality_by_state.csv");

/// Speaker rows in the cohort.
pub const COHORT_ROWS: u64 = 8_938;
/// Non-speaker rows added around the cohort.
pub const OTHER_ROWS: u64 = 1_062;

/// (result, women, men)
pub const RESULT_BY_SEX: [(&str, u64, u64); 3] = [
    ("Positive", 1_845, 2_710),
    ("Negative", 1_937, 1_843),
    ("Pending", 286, 317),
];

/// (result, ambulatory, hospitalized). The positive row uses 1,830
/// hospitalized so it agrees with the ICU table; one unit moves between the
/// positive and negative rows to keep both care margins at 5,909 / 3,029.
pub const CARE_BY_RESULT: [(&str, u64, u64); 3] = [
    ("Positive", 2_725, 1_830),
    ("Negative", 2_754, 1_026),
    ("Pending", 430, 173),
];

/// (sex, ambulatory, hospitalized)
pub const CARE_BY_SEX: [(&str, u64, u64); 2] = [("Female", 2_815, 1_253), ("Male", 3_094, 1_776)];

/// ICU admissions among hospitalized positives, (women, men). Only the total
/// of 164 is published; the split is an assumption.
pub const ICU_BY_SEX: (u64, u64) = (56, 108);
/// Intubations among those in the ICU, (women, men); 84 in total, split assumed.
pub const INTUBATED_BY_SEX: (u64, u64) = (30, 54);
/// Deaths among positives, all of them intubated in the ICU, (women, men).
pub const DEATHS_BY_SEX: (u64, u64) = (18, 49);

/// (state code, deaths, positives) for the cohort's positives.
pub fn deaths_and_positives_by_state() -> Vec<(u8, u64, u64)> {
    BY_STATE
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<u64> = l.split(',').map(|x| x.trim().parse().expect("numeric fixture")).collect();
            (f[0] as u8, f[1], f[2])
        })
        .collect()
}

fn group(key: &[&str], counts: &[(&str, u64)]) -> MarginalGroup {
    MarginalGroup {
        key: key.iter().map(|s| s.to_string()).collect(),
        counts: counts
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|(k, n)| (k.to_string(), *n))
            .collect(),
    }
}

fn table(by: &[Attribute], groups: Vec<MarginalGroup>, rest: Option<&str>) -> MarginalTable {
    MarginalTable {
        by: by.to_vec(),
        groups,
        rest: rest.map(str::to_string),
    }
}

fn universe(pairs: &[(Attribute, &str)]) -> BTreeMap<Attribute, String> {
    pairs.iter().map(|(a, v)| (*a, v.to_string())).collect()
}

fn by_sex(pair: (u64, u64), value: &str) -> Vec<MarginalGroup> {
    vec![
        group(&["Female"], &[(value, pair.0)]),
        group(&["Male"], &[(value, pair.1)]),
    ]
}

pub fn indigenous_cohort_plan() -> MarginalPlan {
    use Attribute::*;
    let speaker = (Indigenous, "Yes");
    let hospitalized_positive = [speaker, (Test, "Positive"), (Care, "Hospitalized")];
    let state_rows = deaths_and_positives_by_state();
    let codes: Vec<String> = state_rows.iter().map(|(s, _, _)| s.to_string()).collect();
    let deaths: Vec<(&str, u64)> = state_rows.iter().zip(&codes).map(|((_, d, _), c)| (c.as_str(), *d)).collect();
    let survivors: Vec<(&str, u64)> = state_rows
        .iter()
        .zip(&codes)
        .map(|((_, d, p), c)| (c.as_str(), p - d))
        .collect();

    let steps = vec![
        PlanStep {
            attribute: Indigenous,
            universe: BTreeMap::new(),
            otherwise: None,
            tables: vec![table(&[], vec![group(&[], &[("Yes", COHORT_ROWS), ("No", OTHER_ROWS)])], None)],
        },
        PlanStep {
            attribute: Test,
            universe: universe(&[speaker]),
            otherwise: None,
            tables: vec![table(
                &[],
                vec![group(
                    &[],
                    &RESULT_BY_SEX.map(|(r, f, m)| (r, f + m)),
                )],
                None,
            )],
        },
        PlanStep {
            attribute: Sex,
            universe: universe(&[speaker]),
            otherwise: None,
            tables: vec![table(
                &[Test],
                RESULT_BY_SEX
                    .iter()
                    .map(|(r, f, m)| group(&[r], &[("Female", *f), ("Male", *m)]))
                    .collect(),
                None,
            )],
        },
        PlanStep {
            attribute: Care,
            universe: universe(&[speaker]),
            otherwise: None,
            tables: vec![
                table(
                    &[Test],
                    CARE_BY_RESULT
                        .iter()
                        .map(|(r, a, h)| group(&[r], &[("Ambulatory", *a), ("Hospitalized", *h)]))
                        .collect(),
                    None,
                ),
                table(
                    &[Sex],
                    CARE_BY_SEX
                        .iter()
                        .map(|(s, a, h)| group(&[s], &[("Ambulatory", *a), ("Hospitalized", *h)]))
                        .collect(),
                    None,
                ),
            ],
        },
        PlanStep {
            attribute: Icu,
            universe: universe(&hospitalized_positive),
            otherwise: None,
            tables: vec![table(&[Sex], by_sex(ICU_BY_SEX, "InIcu"), Some("NotInIcu"))],
        },
        PlanStep {
            attribute: Intubation,
            universe: universe(&[speaker, (Test, "Positive"), (Care, "Hospitalized"), (Icu, "InIcu")]),
            otherwise: None,
            tables: vec![table(&[Sex], by_sex(INTUBATED_BY_SEX, "Intubated"), Some("NotIntubated"))],
        },
        PlanStep {
            attribute: Vital,
            universe: universe(&[speaker, (Test, "Positive"), (Intubation, "Intubated")]),
            otherwise: None,
            tables: vec![table(&[Sex], by_sex(DEATHS_BY_SEX, "Deceased"), Some("NotRecordedDeceased"))],
        },
        PlanStep {
            attribute: Vital,
            universe: universe(&[speaker]),
            otherwise: None,
            tables: vec![table(&[], vec![], Some("NotRecordedDeceased"))],
        },
        PlanStep {
            attribute: State,
            universe: universe(&[speaker, (Test, "Positive")]),
            otherwise: None,
            tables: vec![table(
                &[Vital],
                vec![
                    group(&["Deceased"], &deaths),
                    group(&["NotRecordedDeceased"], &survivors),
                ],
                None,
            )],
        },
    ];
    MarginalPlan { steps }
}

pub fn indigenous_cohort_spec(seed: u64) -> GeneratorSpec {
    let mut spec = GeneratorSpec::new(seed, COHORT_ROWS + OTHER_ROWS);
    spec.plan = Some(indigenous_cohort_plan());
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::solve;

    #[test]
    fn state_table_totals() {
        let rows = deaths_and_positives_by_state();
        assert_eq!(rows.len(), 32);
        assert_eq!(rows.iter().map(|r| r.1).sum::<u64>(), 67);
        assert_eq!(rows.iter().map(|r| r.2).sum::<u64>(), 4_555);
        assert_eq!(DEATHS_BY_SEX.0 + DEATHS_BY_SEX.1, 67);
    }

    #[test]
    fn published_margins_agree() {
        let positives: u64 = RESULT_BY_SEX[0].1 + RESULT_BY_SEX[0].2;
        assert_eq!(positives, CARE_BY_RESULT[0].1 + CARE_BY_RESULT[0].2);
        let hosp: u64 = CARE_BY_RESULT.iter().map(|r| r.2).sum();
        assert_eq!(hosp, CARE_BY_SEX.iter().map(|r| r.2).sum::<u64>());
        assert_eq!(hosp, 3_029);
        assert_eq!(CARE_BY_RESULT.iter().map(|r| r.1).sum::<u64>(), 5_909);
        assert_eq!(ICU_BY_SEX.0 + ICU_BY_SEX.1, 164);
        assert_eq!(INTUBATED_BY_SEX.0 + INTUBATED_BY_SEX.1, 84);
    }

    #[test]
    fn plan_is_solvable() {
        let strata = solve(&indigenous_cohort_plan(), COHORT_ROWS + OTHER_ROWS).unwrap();
        assert_eq!(strata.iter().map(|s| s.count).sum::<u64>(), 10_000);
    }
}
