//! A small hand-written dataset through reader, pipeline, tables and writers.

use std::fs;

use cohort_core::aggregate::{build_table, fatality_rows_by_state, CohortFilter, RegionBasis};
use cohort_core::ingest::{validate_dataset, DatasetReader, Encoding, RowErrorKind, TextEncoding, ValidateOptions};
use cohort_core::pipeline::{run_path, run_reader, PipelineOptions};
use cohort_core::profile::Profile;
use cohort_core::report::{emit_choropleth, emit_csv, emit_json, parse_json, OutputSet, RegionRate};
use cohort_core::table::{Cell, Rate, ReportKind};

const HEADER: &str = "FECHA_ACTUALIZACION,ID_REGISTRO,ENTIDAD_UM,SEXO,ENTIDAD_RES,MUNICIPIO_RES,TIPO_PACIENTE,FECHA_SINTOMAS,FECHA_DEF,INTUBADO,NEUMONIA,EDAD,HABLA_LENGUA_INDIG,DIABETES,EPOC,ASMA,INMUSUPR,HIPERTENSION,OTRA_COM,CARDIOVASCULAR,OBESIDAD,RENAL_CRONICA,TABAQUISMO,OTRO_CASO,RESULTADO,UCI";

struct Row<'a> {
    id: &'a str,
    state: u8,
    sex: &'a str,
    ptype: &'a str,
    death: &'a str,
    intubated: &'a str,
    speaker: &'a str,
    result: &'a str,
    icu: &'a str,
}

impl Row<'_> {
    fn line(&self) -> String {
        format!(
            "2020-08-01,{},{},{},{},001,{},2020-06-20,{},{},2,44,{},1,2,2,2,2,2,2,2,2,2,99,{},{}",
            self.id, self.state, self.sex, self.state, self.ptype, self.death, self.intubated, self.speaker, self.result, self.icu
        )
    }
}

const ALIVE: &str = "9999-99-99";

fn dataset() -> String {
    let rows = [
        Row { id: "p1", state: 7, sex: "1", ptype: "2", death: "2020-07-10", intubated: "1", speaker: "1", result: "1", icu: "1" },
        Row { id: "p2", state: 7, sex: "2", ptype: "2", death: ALIVE, intubated: "2", speaker: "1", result: "1", icu: "1" },
        Row { id: "p3", state: 7, sex: "2", ptype: "2", death: ALIVE, intubated: "97", speaker: "1", result: "1", icu: "2" },
        Row { id: "p4", state: 9, sex: "1", ptype: "1", death: ALIVE, intubated: "97", speaker: "1", result: "1", icu: "97" },
        Row { id: "p5", state: 9, sex: "2", ptype: "1", death: ALIVE, intubated: "97", speaker: "2", result: "1", icu: "97" },
        Row { id: "n1", state: 9, sex: "1", ptype: "1", death: ALIVE, intubated: "97", speaker: "1", result: "2", icu: "97" },
        Row { id: "q1", state: 9, sex: "2", ptype: "2", death: ALIVE, intubated: "97", speaker: "1", result: "3", icu: "2" },
        Row { id: "bad", state: 9, sex: "2", ptype: "2", death: "2020-02-31", intubated: "97", speaker: "1", result: "1", icu: "2" },
    ];
    let mut text = String::from(HEADER);
    for r in &rows {
        text.push('\n');
        text.push_str(&r.line());
    }
    text.push('\n');
    text
}

fn speakers() -> PipelineOptions {
    PipelineOptions {
        filter: CohortFilter {
            indigenous_only: true,
            ..CohortFilter::default()
        },
        ..PipelineOptions::default()
    }
}

fn run(text: &str, options: &PipelineOptions) -> cohort_core::pipeline::PipelineOutput {
    let profile = Profile::default_dge();
    let reader = DatasetReader::new(text.as_bytes(), &profile.schema, options.encoding).unwrap();
    run_reader(reader, &profile, options).unwrap()
}

#[test]
fn tables_for_the_speaker_cohort() {
    let out = run(&dataset(), &speakers());
    assert_eq!(out.validation.rows_total, 8);
    assert_eq!(out.validation.rows_rejected, 1);
    assert_eq!(out.validation.errors_by_kind[&RowErrorKind::MalformedDate], 1);
    let acc = &out.accumulator;
    assert_eq!(acc.rejected_rows(), 1);
    assert_eq!(acc.grand_total(), 6);

    let t = build_table(acc, ReportKind::ResultBySex);
    assert_eq!(t.columns, ["Women", "Men", "Total"]);
    assert_eq!(t.count("Positive", "Women"), Some(2));
    assert_eq!(t.count("Positive", "Men"), Some(2));
    assert_eq!(t.count("Negative", "Total"), Some(1));
    assert_eq!(t.count("Pending", "Men"), Some(1));
    assert_eq!(t.count("Total", "Total"), Some(6));

    let t = build_table(acc, ReportKind::CareByResult);
    assert_eq!(t.count("Positive", "Ambulatory"), Some(1));
    assert_eq!(t.count("Positive", "Hospitalized"), Some(3));
    assert_eq!(t.count("Pending", "Hospitalized"), Some(1));

    let t = build_table(acc, ReportKind::IcuAmongHospitalizedPositives);
    assert_eq!(t.count("Hospitalized", "ICU"), Some(2));
    assert_eq!(t.count("Hospitalized", "No ICU"), Some(1));
    assert_eq!(t.count("Hospitalized", "Total"), Some(3));

    let t = build_table(acc, ReportKind::IntubationAmongIcu);
    assert_eq!(t.count("Hospitalized ICU", "Intubated"), Some(1));
    assert_eq!(t.count("Hospitalized ICU", "Not intubated"), Some(1));

    let t = build_table(acc, ReportKind::FatalityByState);
    assert_eq!(t.rows.len(), 33);
    assert_eq!(t.cell("7", "Case fatality rate"), Some(Cell::Rate(Rate::from_hundredths(3333))));
    assert_eq!(t.cell("9", "Case fatality rate"), Some(Cell::Rate(Rate::from_hundredths(0))));
    assert_eq!(t.cell("1", "Case fatality rate"), Some(Cell::Rate(Rate::Undefined)));
    assert_eq!(t.cell("Total", "Case fatality rate"), Some(Cell::Rate(Rate::from_hundredths(2500))));
}

#[test]
fn without_the_cohort_filter_everyone_counts() {
    let out = run(&dataset(), &PipelineOptions::default());
    assert_eq!(out.accumulator.grand_total(), 7);
    let rows = fatality_rows_by_state(&out.accumulator);
    let total = rows.last().unwrap();
    assert_eq!((total.deaths, total.positives), (1, 5));
}

#[test]
fn worker_and_batch_settings_do_not_change_results() {
    let text = dataset();
    let base = run(&text, &speakers());
    for workers in [1, 2, 3, 8] {
        for batch_rows in [1, 2, 5, 1024] {
            let options = PipelineOptions {
                workers,
                batch_rows,
                ..speakers()
            };
            let out = run(&text, &options);
            for kind in ReportKind::ALL {
                assert_eq!(
                    emit_csv(&build_table(&out.accumulator, kind)),
                    emit_csv(&build_table(&base.accumulator, kind)),
                    "{kind:?} workers={workers} batch={batch_rows}"
                );
            }
        }
    }
}

#[test]
fn latin1_input_is_detected() {
    let mut bytes = dataset().into_bytes();
    // a Latin-1 "ñ" in the update-date column of the last row
    let at = bytes.len() - dataset().lines().last().unwrap().len() - 1;
    bytes.splice(at..at + 1, [0xF1]);
    let profile = Profile::default_dge();
    let reader = DatasetReader::new(&bytes[..], &profile.schema, Encoding::Auto).unwrap();
    assert_eq!(reader.encoding(), TextEncoding::Latin1);
}

#[test]
fn json_round_trip_and_csv_layout() {
    let out = run(&dataset(), &speakers());
    for kind in ReportKind::ALL {
        let table = build_table(&out.accumulator, kind);
        assert!(table.is_rectangular());
        assert_eq!(parse_json(&emit_json(&table)).unwrap(), table);
        let csv = emit_csv(&table);
        assert_eq!(csv.lines().count(), table.rows.len() + 1);
        assert!(csv.contains("\r\n"));
    }
    let csv = emit_csv(&build_table(&out.accumulator, ReportKind::FatalityByState));
    assert!(csv.contains("\r\n1,0,0,\r\n"), "{csv}");
    assert!(csv.contains("\r\n7,1,3,33.33\r\n"), "{csv}");
}

#[test]
fn choropleth_joins_on_state_code() {
    let out = run(&dataset(), &speakers());
    let rates = RegionRate::from_state_rows(&fatality_rows_by_state(&out.accumulator));
    assert_eq!(rates.len(), 32);
    let boundaries = r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"CVE_ENT":"07","NOMGEO":"Chiapas"},"geometry":null},
        {"type":"Feature","properties":{"CVE_ENT":9},"geometry":null},
        {"type":"Feature","properties":{"CVE_ENT":"99"},"geometry":null}
    ]}"#;
    let map = emit_choropleth(&rates, boundaries, "CVE_ENT").unwrap();
    assert_eq!(map.matched_features, 2);
    assert_eq!(map.join_misses.len(), 30);
    let doc: serde_json::Value = serde_json::from_str(&map.geojson).unwrap();
    let props = |i: usize| doc["features"][i]["properties"].clone();
    assert_eq!(props(0)["rate_percent"].to_string(), "33.33");
    assert_eq!(props(0)["NOMGEO"], "Chiapas");
    assert_eq!(props(1)["rate_percent"].to_string(), "0.00");
    assert!(props(2)["rate_percent"].is_null());
    assert!(emit_choropleth(&rates, "{\"type\":\"Feature\"}", "CVE_ENT").is_err());
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("cases.csv");
    fs::write(&input, dataset()).unwrap();
    let profile = Profile::default_dge();

    let report = validate_dataset(&input, &profile.schema, ValidateOptions::default()).unwrap();
    assert_eq!((report.rows_total, report.rows_accepted), (8, 7));
    assert_eq!(report.duplicate_record_ids, Some(0));
    assert_eq!(report.first_errors[0].row_number, 8);

    let out = run_path(&input, &profile, &speakers()).unwrap();
    assert_eq!(out.accumulator.basis(), RegionBasis::Reporting);
    assert_eq!(out.accumulator.grand_total(), 6);

    let out_dir = dir.path().join("out");
    let mut set = OutputSet::new(&out_dir).unwrap();
    set.write("a.csv", b"x\r\n").unwrap();
    set.write("b.csv", b"y\r\n").unwrap();
    drop(set);
    assert_eq!(fs::read_dir(&out_dir).unwrap().count(), 0, "uncommitted files are removed");

    let mut set = OutputSet::new(&out_dir).unwrap();
    set.write("a.csv", b"x\r\n").unwrap();
    let kept = set.commit();
    assert_eq!(kept.len(), 1);
    assert_eq!(fs::read(&kept[0]).unwrap(), b"x\r\n");

    assert!(run_path(&dir.path().join("missing.csv"), &profile, &speakers()).is_err());
}
