//! Row generation. Planted attributes come from the solved strata; every
//! other field is drawn from the generator weights with a ChaCha8 stream seeded
//! from `spec.seed`, so a given spec always yields the same bytes.

use std::collections::BTreeMap;
use std::io::{self, Write};

use chrono::{Duration, NaiveDate};
use cohort_core::ingest::RowErrorKind;
use cohort_core::record::{
    CareStatus, Comorbidities, Comorbidity, Field, PatientRecord, RegionKey, Sex, StateCode, TriState,
};
use cohort_core::schema::{decode_code, CatalogTable, SchemaConfig};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::plan::{solve, Attribute, Stratum, ATTRIBUTE_COUNT};
use crate::spec::{GeneratorSpec, Weighted};
use crate::SynthError;

/// Columns the schema does not map, written ahead of the mapped ones.
const EXTRA_COLUMNS: [&str; 2] = ["FECHA_ACTUALIZACION", "ORIGEN"];
const UPDATE_DATE: &str = "2020-08-01";
const BAD_DATE: &str = "2020-13-40";
const BAD_AGE: &str = "-3";
const UTF8_BOM: &[u8] = b"\xEF\xBB\xBF";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectedFault {
    /// 1-based data row.
    pub row_number: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub csv: Vec<u8>,
    /// Rows that survive ingestion, decoded, in file order.
    pub records: Vec<PatientRecord>,
    pub faults: Vec<InjectedFault>,
}

/// Generates a whole dataset in memory.
pub fn generate(spec: &GeneratorSpec, schema: &SchemaConfig) -> Result<Generated, SynthError> {
    let mut csv = Vec::new();
    let mut records = Vec::new();
    let faults = write_dataset(spec, schema, &mut csv, |r| records.push(r))?;
    Ok(Generated { csv, records, faults })
}

/// Streams a dataset to `out`, handing each accepted record to `on_record`.
pub fn write_dataset<W: Write>(
    spec: &GeneratorSpec,
    schema: &SchemaConfig,
    out: W,
    mut on_record: impl FnMut(PatientRecord),
) -> Result<Vec<InjectedFault>, SynthError> {
    let layout = Layout::new(schema)?;
    let codes = Codes::new(spec, schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let strata = match &spec.plan {
        Some(plan) => solve(plan, spec.rows)?,
        None => vec![Stratum {
            values: [None; ATTRIBUTE_COUNT],
            count: spec.rows,
        }],
    };
    let row_strata: Option<Vec<u32>> = if strata.len() > 1 {
        let mut ids: Vec<u32> = Vec::with_capacity(spec.rows as usize);
        for (i, s) in strata.iter().enumerate() {
            ids.extend(std::iter::repeat_n(i as u32, s.count as usize));
        }
        ids.shuffle(&mut rng);
        Some(ids)
    } else {
        None
    };

    let fault_rows = pick_fault_rows(spec, &layout, &mut rng)?;
    let mut out = io::BufWriter::new(out);
    if fault_rows.values().any(|k| *k == RowErrorKind::EncodingError) {
        // forces UTF-8 detection so the stray bytes are an error rather than Latin-1
        out.write_all(UTF8_BOM).map_err(SynthError::write)?;
    }
    write_line(&mut out, layout.header.iter().map(|h| h.as_bytes()))?;

    let mut injected = Vec::with_capacity(fault_rows.len());
    let mut cells: Vec<Vec<u8>> = vec![Vec::new(); layout.header.len()];
    for i in 0..spec.rows {
        let stratum = match &row_strata {
            Some(ids) => &strata[ids[i as usize] as usize],
            None => &strata[0],
        };
        let row = codes.draw_row(i, stratum, &mut rng);
        layout.fill(&row, &mut cells);
        let fault = fault_rows.get(&i).copied();
        let mut width = cells.len();
        match fault {
            None => on_record(codes.decode(&row, schema)),
            Some(kind) => {
                injected.push(InjectedFault {
                    row_number: i + 1,
                    kind,
                });
                match kind {
                    RowErrorKind::MalformedDate => cells[layout.pos(Field::DeathDate)] = BAD_DATE.into(),
                    RowErrorKind::MalformedInteger => cells[layout.pos(Field::Age)] = BAD_AGE.into(),
                    RowErrorKind::EmptyRequired => cells[layout.pos(Field::RecordId)].clear(),
                    RowErrorKind::EncodingError => cells[layout.pos(Field::RecordId)].extend_from_slice(b"\xFF\xFE"),
                    RowErrorKind::MissingColumn => width -= 1,
                }
            }
        }
        write_line(&mut out, cells[..width].iter().map(Vec::as_slice))?;
    }
    out.flush().map_err(SynthError::write)?;
    Ok(injected)
}

fn write_line<'a, W: Write>(out: &mut W, cells: impl Iterator<Item = &'a [u8]>) -> Result<(), SynthError> {
    for (i, cell) in cells.enumerate() {
        if i > 0 {
            out.write_all(b",").map_err(SynthError::write)?;
        }
        if cell.iter().any(|b| matches!(b, b',' | b'"' | b'\n' | b'\r')) {
            out.write_all(b"\"").map_err(SynthError::write)?;
            for &b in cell {
                if b == b'"' {
                    out.write_all(b"\"\"").map_err(SynthError::write)?;
                } else {
                    out.write_all(&[b]).map_err(SynthError::write)?;
                }
            }
            out.write_all(b"\"").map_err(SynthError::write)?;
        } else {
            out.write_all(cell).map_err(SynthError::write)?;
        }
    }
    out.write_all(b"\n").map_err(SynthError::write)
}

fn pick_fault_rows(
    spec: &GeneratorSpec,
    layout: &Layout,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<u64, RowErrorKind>, SynthError> {
    let total = spec.total_faults();
    if total > spec.rows {
        return Err(SynthError::Faults(format!(
            "{total} faults requested over {} rows",
            spec.rows
        )));
    }
    for (kind, n) in &spec.faults {
        let needs = match kind {
            RowErrorKind::MalformedDate => Some(Field::DeathDate),
            RowErrorKind::MalformedInteger => Some(Field::Age),
            RowErrorKind::EmptyRequired | RowErrorKind::EncodingError => Some(Field::RecordId),
            RowErrorKind::MissingColumn => None,
        };
        if *n > 0 && needs.is_some_and(|f| layout.position(f).is_none()) {
            return Err(SynthError::Faults(format!("cannot inject {kind:?}: field not mapped")));
        }
    }
    let rows = rand::seq::index::sample(rng, spec.rows as usize, total as usize).into_vec();
    let mut chosen: Vec<u64> = rows.into_iter().map(|r| r as u64).collect();
    chosen.sort_unstable();
    // deal kinds over the sorted rows in a seeded order
    let mut kinds: Vec<RowErrorKind> = spec
        .faults
        .iter()
        .flat_map(|(k, n)| std::iter::repeat_n(*k, *n as usize))
        .collect();
    kinds.shuffle(rng);
    Ok(chosen.into_iter().zip(kinds).collect())
}

/// Header order and where each mapped field sits in it.
struct Layout {
    header: Vec<String>,
    fields: Vec<(Field, usize)>,
}

impl Layout {
    fn new(schema: &SchemaConfig) -> Result<Self, SynthError> {
        let mut header: Vec<String> = EXTRA_COLUMNS
            .iter()
            .filter(|c| schema.mapped_columns().all(|(_, m)| m != **c))
            .map(|c| c.to_string())
            .collect();
        let mut fields = Vec::new();
        for (field, column) in schema.mapped_columns() {
            fields.push((field, header.len()));
            header.push(column.to_string());
        }
        Ok(Layout { header, fields })
    }

    fn position(&self, field: Field) -> Option<usize> {
        self.fields.iter().find(|(f, _)| *f == field).map(|(_, p)| *p)
    }

    fn pos(&self, field: Field) -> usize {
        self.position(field).expect("checked when faults were picked")
    }

    fn fill(&self, row: &RawRow, cells: &mut [Vec<u8>]) {
        for (i, c) in cells.iter_mut().enumerate().take(EXTRA_COLUMNS.len()) {
            c.clear();
            c.extend_from_slice(if i == 0 { UPDATE_DATE.as_bytes() } else { b"1" });
        }
        for (field, pos) in &self.fields {
            let cell = &mut cells[*pos];
            cell.clear();
            cell.extend_from_slice(row.cell(*field).as_bytes());
        }
    }
}

/// Raw cell text for every semantic field of one row.
struct RawRow {
    values: BTreeMap<Field, String>,
}

impl RawRow {
    fn cell(&self, field: Field) -> &str {
        self.values.get(&field).map(String::as_str).unwrap_or("")
    }
}

struct Picker {
    codes: Vec<String>,
    dist: WeightedIndex<u32>,
}

impl Picker {
    fn new(name: &str, weights: &[Weighted]) -> Result<Self, SynthError> {
        let dist = WeightedIndex::new(weights.iter().map(|w| w.weight))
            .map_err(|e| SynthError::Weights(format!("{name}: {e}")))?;
        Ok(Picker {
            codes: weights.iter().map(|w| w.code.clone()).collect(),
            dist,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> String {
        self.codes[self.dist.sample(rng)].clone()
    }
}

fn catalog_code<M: Copy + PartialEq + std::fmt::Debug>(
    catalog: &CatalogTable<M>,
    meaning: M,
) -> Result<String, SynthError> {
    catalog
        .code_for(meaning)
        .map(str::to_string)
        .ok_or_else(|| SynthError::Schema(format!("no code decodes to {meaning:?}")))
}

/// Raw codes for planted values and weighted pickers for the rest.
struct Codes {
    sex: Picker,
    patient_type: Picker,
    icu: Picker,
    intubated: Picker,
    lab_result: Picker,
    indigenous: Picker,
    case_contact: Picker,
    travel_history: Picker,
    comorbidity: Picker,
    states: Option<Picker>,
    /// Planted value → raw code, per attribute.
    planted: [Vec<String>; ATTRIBUTE_COUNT],
    moved_per_mille: u32,
    death_per_mille: u32,
    municipalities: u16,
    unspecified_municipality: Option<String>,
    unspecified_municipality_per_mille: u32,
    age_max: u16,
    sentinel: String,
    date_format: String,
}

impl Codes {
    fn new(spec: &GeneratorSpec, schema: &SchemaConfig) -> Result<Self, SynthError> {
        let w = &spec.weights;
        let flag = |field: Field| -> Result<Vec<String>, SynthError> {
            if schema.is_absent(field) {
                return Ok(vec![String::new(); 4]);
            }
            let c = schema.flag_catalog(field);
            let yes = catalog_code(c, TriState::Yes)?;
            let no = catalog_code(c, TriState::No)?;
            let unspecified = catalog_code(c, TriState::Unspecified)?;
            // planted yes / no / not applicable / unspecified
            Ok(vec![yes, no, unspecified.clone(), unspecified])
        };
        let first = |set: &std::collections::BTreeSet<String>, what: &str| {
            set.iter()
                .next()
                .cloned()
                .ok_or_else(|| SynthError::Schema(format!("no {what} code configured")))
        };
        let indigenous = flag(Field::IndigenousSpeaker)?;
        let planted = [
            indigenous[..3].to_vec(),
            vec![
                first(schema.positive_codes(), "positive")?,
                first(schema.negative_codes(), "negative")?,
                first(schema.pending_codes(), "pending")?,
            ],
            Sex::ALL
                .iter()
                .map(|s| catalog_code(schema.sex_catalog(), *s))
                .collect::<Result<_, _>>()?,
            CareStatus::ALL
                .iter()
                .map(|s| catalog_code(schema.patient_type_catalog(), *s))
                .collect::<Result<_, _>>()?,
            flag(Field::Icu)?,
            flag(Field::Intubated)?,
            Vec::new(),
            (1..=32).map(|s: u8| s.to_string()).collect(),
        ];
        let states = if w.states.is_empty() {
            None
        } else {
            for s in &w.states {
                if s.code.parse::<u8>().ok().and_then(StateCode::new).is_none() {
                    return Err(SynthError::Weights(format!("state {:?} is not 1..=32", s.code)));
                }
            }
            Some(Picker::new("states", &w.states)?)
        };
        if w.age_max > cohort_core::ingest::AGE_CAP {
            return Err(SynthError::Weights("age_max above the validation cap".into()));
        }
        if w.municipalities == 0 {
            return Err(SynthError::Weights("municipalities must be at least 1".into()));
        }
        Ok(Codes {
            sex: Picker::new("sex", &w.sex)?,
            patient_type: Picker::new("patient_type", &w.patient_type)?,
            icu: Picker::new("icu", &w.icu)?,
            intubated: Picker::new("intubated", &w.intubated)?,
            lab_result: Picker::new("lab_result", &w.lab_result)?,
            indigenous: Picker::new("indigenous_speaker", &w.indigenous_speaker)?,
            case_contact: Picker::new("case_contact", &w.case_contact)?,
            travel_history: Picker::new("travel_history", &w.travel_history)?,
            comorbidity: Picker::new("comorbidity", &w.comorbidity)?,
            states,
            planted,
            moved_per_mille: w.moved_per_mille,
            death_per_mille: w.death_per_mille,
            municipalities: w.municipalities,
            unspecified_municipality: schema.unspecified_municipality_codes().iter().next().cloned(),
            unspecified_municipality_per_mille: w.unspecified_municipality_per_mille,
            age_max: w.age_max,
            sentinel: schema.date_sentinels()[0].clone(),
            date_format: schema.date_format().to_string(),
        })
    }

    fn pick(&self, stratum: &Stratum, attr: Attribute, picker: &Picker, rng: &mut ChaCha8Rng) -> String {
        match stratum.get(attr) {
            Some(v) => self.planted[attr.index()][usize::from(v)].clone(),
            None => picker.draw(rng),
        }
    }

    fn per_mille(rng: &mut ChaCha8Rng, p: u32) -> bool {
        rng.gen_range(0..1000) < p
    }

    fn draw_row(&self, index: u64, stratum: &Stratum, rng: &mut ChaCha8Rng) -> RawRow {
        let mut v = BTreeMap::new();
        v.insert(Field::RecordId, format!("g{:07x}", index + 1));
        v.insert(Field::Sex, self.pick(stratum, Attribute::Sex, &self.sex, rng));
        v.insert(Field::Age, rng.gen_range(0..=self.age_max).to_string());

        let reporting: u8 = match stratum.get(Attribute::State) {
            Some(s) => s + 1,
            None => match &self.states {
                Some(p) => p.draw(rng).parse().expect("validated state code"),
                None => rng.gen_range(1..=32),
            },
        };
        let residence = if Self::per_mille(rng, self.moved_per_mille) {
            rng.gen_range(1..=32)
        } else {
            reporting
        };
        v.insert(Field::ReportingState, reporting.to_string());
        v.insert(Field::ResidenceState, residence.to_string());
        let municipality = match &self.unspecified_municipality {
            Some(code) if Self::per_mille(rng, self.unspecified_municipality_per_mille) => code.clone(),
            _ => format!("{:03}", rng.gen_range(1..=self.municipalities)),
        };
        v.insert(Field::ResidenceMunicipality, municipality);

        v.insert(Field::PatientType, self.pick(stratum, Attribute::Care, &self.patient_type, rng));
        v.insert(Field::Icu, self.pick(stratum, Attribute::Icu, &self.icu, rng));
        v.insert(Field::Intubated, self.pick(stratum, Attribute::Intubation, &self.intubated, rng));
        v.insert(Field::LabResult, self.pick(stratum, Attribute::Test, &self.lab_result, rng));

        let onset = NaiveDate::from_ymd_opt(2020, 2, 1).expect("valid date") + Duration::days(rng.gen_range(0..180));
        let dies = match stratum.get(Attribute::Vital) {
            Some(v) => v == 0,
            None => Self::per_mille(rng, self.death_per_mille),
        };
        let death = if dies {
            (onset + Duration::days(rng.gen_range(0..30))).format(&self.date_format).to_string()
        } else {
            self.sentinel.clone()
        };
        v.insert(Field::SymptomOnsetDate, onset.format(&self.date_format).to_string());
        v.insert(Field::DeathDate, death);

        v.insert(
            Field::IndigenousSpeaker,
            self.pick(stratum, Attribute::Indigenous, &self.indigenous, rng),
        );
        v.insert(Field::CaseContact, self.case_contact.draw(rng));
        v.insert(Field::TravelHistory, self.travel_history.draw(rng));
        for c in Comorbidity::ALL {
            v.insert(Field::Comorbidity(c), self.comorbidity.draw(rng));
        }
        RawRow { values: v }
    }

    /// The record ingestion yields for an uncorrupted row.
    fn decode(&self, row: &RawRow, schema: &SchemaConfig) -> PatientRecord {
        let mapped = |f: Field| (!schema.is_absent(f)).then(|| row.cell(f).to_string());
        let flag = |f: Field| match mapped(f) {
            Some(code) => decode_code(schema.flag_catalog(f), &code),
            None => TriState::Unspecified,
        };
        let state = |f: Field| mapped(f).map(|s| StateCode::new(s.parse().expect("generated")).expect("generated"));
        let date = |f: Field| {
            mapped(f).and_then(|s| {
                (!schema.date_sentinels().contains(&s))
                    .then(|| NaiveDate::parse_from_str(&s, &self.date_format).expect("generated date"))
            })
        };
        let reporting = state(Field::ReportingState).expect("reporting state is required");
        let municipality = mapped(Field::ResidenceMunicipality)
            .filter(|m| !schema.is_unspecified_municipality(m))
            .map(|m| m.parse().expect("generated"));
        let mut comorbidities = Comorbidities::default();
        for c in Comorbidity::ALL {
            comorbidities.set(c, flag(Field::Comorbidity(c)));
        }
        PatientRecord {
            record_id: row.cell(Field::RecordId).to_string(),
            sex: mapped(Field::Sex)
                .map(|c| decode_code(schema.sex_catalog(), &c))
                .unwrap_or(Sex::Unspecified),
            age: row.cell(Field::Age).parse().expect("generated"),
            residence: RegionKey {
                state: state(Field::ResidenceState).unwrap_or(reporting),
                municipality,
            },
            reporting_state: reporting,
            patient_type_code: mapped(Field::PatientType).unwrap_or_default(),
            icu_code: mapped(Field::Icu).unwrap_or_default(),
            intubated_code: mapped(Field::Intubated).unwrap_or_default(),
            lab_result_code: row.cell(Field::LabResult).to_string(),
            death_date: date(Field::DeathDate),
            symptom_onset_date: date(Field::SymptomOnsetDate),
            indigenous_speaker: flag(Field::IndigenousSpeaker),
            case_contact: flag(Field::CaseContact),
            travel_history: flag(Field::TravelHistory),
            comorbidities,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cohort_core::ingest::{DatasetReader, Encoding, RowOutcome};
    use cohort_core::profile::Profile;

    fn ingest(bytes: &[u8], schema: &SchemaConfig) -> Vec<RowOutcome> {
        DatasetReader::new(bytes, schema, Encoding::Auto)
            .unwrap()
            .map(Result::unwrap)
            .collect()
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = Profile::default_dge();
        let a = generate(&GeneratorSpec::new(7, 50), &p.schema).unwrap();
        let b = generate(&GeneratorSpec::new(7, 50), &p.schema).unwrap();
        let c = generate(&GeneratorSpec::new(8, 50), &p.schema).unwrap();
        assert_eq!(a.csv, b.csv);
        assert_ne!(a.csv, c.csv);
        assert_eq!(a.records.len(), 50);
    }

    #[test]
    fn zero_rows_is_header_only() {
        let p = Profile::default_dge();
        let g = generate(&GeneratorSpec::new(1, 0), &p.schema).unwrap();
        assert_eq!(g.csv.iter().filter(|b| **b == b'\n').count(), 1);
        assert!(g.records.is_empty());
    }

    #[test]
    fn records_match_ingestion() {
        let p = Profile::default_dge();
        let g = generate(&GeneratorSpec::new(3, 2_000), &p.schema).unwrap();
        let parsed: Vec<PatientRecord> = ingest(&g.csv, &p.schema)
            .into_iter()
            .map(|o| match o {
                RowOutcome::Record(r) => r,
                RowOutcome::Rejected(e) => panic!("unexpected rejection {e:?}"),
            })
            .collect();
        assert_eq!(parsed, g.records);
    }

    #[test]
    fn faults_are_exact_and_isolated() {
        let p = Profile::default_dge();
        let mut spec = GeneratorSpec::new(11, 500);
        for (k, n) in [
            (RowErrorKind::MalformedDate, 7),
            (RowErrorKind::MalformedInteger, 3),
            (RowErrorKind::EmptyRequired, 2),
            (RowErrorKind::MissingColumn, 4),
            (RowErrorKind::EncodingError, 5),
        ] {
            spec.faults.insert(k, n);
        }
        let g = generate(&spec, &p.schema).unwrap();
        assert_eq!(g.faults.len(), 21);
        assert_eq!(g.records.len(), 479);
        let outcomes = ingest(&g.csv, &p.schema);
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for o in outcomes {
            match o {
                RowOutcome::Record(r) => accepted.push(r),
                RowOutcome::Rejected(e) => rejected.push((e.row_number, e.kind)),
            }
        }
        assert_eq!(accepted, g.records);
        let injected: Vec<_> = g.faults.iter().map(|f| (f.row_number, f.kind)).collect();
        assert_eq!(rejected, injected);
    }

    #[test]
    fn too_many_faults() {
        let p = Profile::default_dge();
        let mut spec = GeneratorSpec::new(1, 3);
        spec.faults.insert(RowErrorKind::MalformedDate, 4);
        assert!(matches!(generate(&spec, &p.schema), Err(SynthError::Faults(_))));
    }
}
