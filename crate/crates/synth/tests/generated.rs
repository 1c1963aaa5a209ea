//! Generated datasets read back through the streaming pipeline.

use std::collections::BTreeSet;

use cohort_core::aggregate::{build_table, CohortFilter, RegionBasis};
use cohort_core::classify::classify_patient;
use cohort_core::ingest::{validate_reader, DatasetReader, Encoding, RowErrorKind, ValidateOptions};
use cohort_core::pipeline::{run_reader, PipelineOptions, PipelineOutput};
use cohort_core::profile::Profile;
use cohort_core::record::StateCode;
use cohort_core::table::{Cell, Rate, ReportKind};
use cohort_synth::fixture::{self, indigenous_cohort_spec};
use cohort_synth::{generate, oracle_counts, GeneratorSpec, OracleFilter};
use proptest::prelude::*;

fn pipeline(csv: &[u8], profile: &Profile, options: &PipelineOptions) -> PipelineOutput {
    let reader = DatasetReader::new(csv, &profile.schema, Encoding::Auto).unwrap();
    run_reader(reader, profile, options).unwrap()
}

fn speakers(workers: usize) -> PipelineOptions {
    PipelineOptions {
        workers,
        filter: CohortFilter {
            indigenous_only: true,
            ..CohortFilter::default()
        },
        ..PipelineOptions::default()
    }
}

#[test]
fn cohort_fixture_reproduces_its_tables() {
    let profile = Profile::default_dge();
    let data = generate(&indigenous_cohort_spec(7), &profile.schema).unwrap();
    assert_eq!(data.records.len(), 10_000);
    let out = pipeline(&data.csv, &profile, &speakers(4));
    let acc = &out.accumulator;
    assert_eq!(acc.grand_total(), fixture::COHORT_ROWS);

    let t = build_table(acc, ReportKind::ResultBySex);
    for (result, women, men) in fixture::RESULT_BY_SEX {
        assert_eq!(t.count(result, "Women"), Some(women), "{result}");
        assert_eq!(t.count(result, "Men"), Some(men), "{result}");
    }
    let t = build_table(acc, ReportKind::CareByResult);
    for (result, amb, hosp) in fixture::CARE_BY_RESULT {
        assert_eq!(t.count(result, "Ambulatory"), Some(amb));
        assert_eq!(t.count(result, "Hospitalized"), Some(hosp));
    }
    let t = build_table(acc, ReportKind::CareBySex);
    for ((sex, amb, hosp), label) in fixture::CARE_BY_SEX.into_iter().zip(["Women", "Men"]) {
        assert_eq!(t.count(label, "Ambulatory"), Some(amb), "{sex}");
        assert_eq!(t.count(label, "Hospitalized"), Some(hosp), "{sex}");
    }
    let t = build_table(acc, ReportKind::IcuAmongHospitalizedPositives);
    assert_eq!(t.count("Hospitalized", "ICU"), Some(164));
    assert_eq!(t.count("Hospitalized", "No ICU"), Some(1_666));
    let t = build_table(acc, ReportKind::IntubationAmongIcu);
    assert_eq!(t.count("Hospitalized ICU", "Intubated"), Some(84));
    assert_eq!(t.count("Hospitalized ICU", "Not intubated"), Some(80));

    let t = build_table(acc, ReportKind::FatalityByState);
    for (state, deaths, positives) in fixture::deaths_and_positives_by_state() {
        let row = state.to_string();
        assert_eq!(t.count(&row, "Deaths"), Some(deaths));
        assert_eq!(t.count(&row, "Positives"), Some(positives));
    }
    assert_eq!(t.cell("Total", "Case fatality rate"), Some(Cell::Rate(Rate::from_hundredths(147))));

    let filter = OracleFilter {
        indigenous_only: true,
        ..OracleFilter::default()
    };
    for kind in ReportKind::ALL {
        assert_eq!(build_table(acc, kind), oracle_counts(&data.records, &profile.schema, kind, &filter), "{kind:?}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let profile = Profile::default_dge();
    let a = generate(&indigenous_cohort_spec(11), &profile.schema).unwrap();
    let b = generate(&indigenous_cohort_spec(11), &profile.schema).unwrap();
    let c = generate(&indigenous_cohort_spec(12), &profile.schema).unwrap();
    assert_eq!(a.csv, b.csv);
    assert_ne!(a.csv, c.csv);
}

fn arb_spec() -> impl Strategy<Value = GeneratorSpec> {
    (
        any::<u64>(),
        0u64..600,
        proptest::collection::vec(0u64..4, RowErrorKind::ALL.len()),
        0u32..1000,
        0u32..1000,
    )
        .prop_map(|(seed, rows, faults, moved, death)| {
            let mut spec = GeneratorSpec::new(seed, rows);
            spec.weights.moved_per_mille = moved;
            spec.weights.death_per_mille = death;
            let mut budget = rows;
            for (kind, n) in RowErrorKind::ALL.into_iter().zip(faults) {
                let n = n.min(budget);
                budget -= n;
                if n > 0 {
                    spec.faults.insert(kind, n);
                }
            }
            spec
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_specs_agree_with_the_oracle(
        spec in arb_spec(),
        residence in any::<bool>(),
        states in proptest::option::of(proptest::collection::btree_set(1u8..=32, 1..6)),
        workers in 1usize..5,
        batch_rows in 1usize..300,
    ) {
        let profile = Profile::default_dge();
        let data = generate(&spec, &profile.schema).unwrap();
        prop_assert_eq!(data.faults.len() as u64, spec.total_faults());

        for r in &data.records {
            prop_assert!(classify_patient(r, &profile.schema, &profile.rules).is_gated());
        }

        let options = PipelineOptions {
            workers,
            batch_rows,
            basis: if residence { RegionBasis::Residence } else { RegionBasis::Reporting },
            filter: CohortFilter {
                states: states.as_ref().map(|s| s.iter().map(|c| StateCode::new(*c).unwrap()).collect()),
                ..CohortFilter::default()
            },
            ..PipelineOptions::default()
        };
        let out = pipeline(&data.csv, &profile, &options);
        prop_assert_eq!(out.validation.rows_rejected, spec.total_faults());
        prop_assert_eq!(out.validation.rows_accepted, data.records.len() as u64);

        let filter = OracleFilter {
            states: states.clone().map(|s| s.into_iter().collect::<BTreeSet<u8>>()),
            by_residence: residence,
            ..OracleFilter::default()
        };
        for kind in ReportKind::ALL {
            prop_assert_eq!(
                build_table(&out.accumulator, kind),
                oracle_counts(&data.records, &profile.schema, kind, &filter),
                "{:?}", kind
            );
        }
    }

    #[test]
    fn injected_faults_are_counted_exactly(spec in arb_spec()) {
        let profile = Profile::default_dge();
        let data = generate(&spec, &profile.schema).unwrap();
        let reader = DatasetReader::new(&data.csv[..], &profile.schema, Encoding::Auto).unwrap();
        let report = validate_reader(reader, ValidateOptions::default()).unwrap();
        prop_assert_eq!(report.rows_total, spec.rows);
        for kind in RowErrorKind::ALL {
            let planted = spec.faults.get(&kind).copied().unwrap_or(0);
            prop_assert_eq!(report.errors_by_kind[&kind], planted, "{:?}", kind);
        }
        let rows: BTreeSet<u64> = report.first_errors.iter().map(|e| e.row_number).collect();
        let planted: BTreeSet<u64> = data.faults.iter().map(|f| f.row_number).collect();
        prop_assert!(rows.is_subset(&planted));
    }
}

#[test]
fn ten_thousand_random_rows_match_the_oracle() {
    let profile = Profile::default_dge();
    let mut spec = GeneratorSpec::new(2024, 10_000);
    spec.faults.insert(RowErrorKind::MalformedInteger, 25);
    let data = generate(&spec, &profile.schema).unwrap();
    let out = pipeline(&data.csv, &profile, &PipelineOptions { workers: 4, ..PipelineOptions::default() });
    assert_eq!(out.accumulator.grand_total(), 9_975);
    for kind in ReportKind::ALL {
        assert_eq!(
            build_table(&out.accumulator, kind),
            oracle_counts(&data.records, &profile.schema, kind, &OracleFilter::default()),
            "{kind:?}"
        );
    }
}
