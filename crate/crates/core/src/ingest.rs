//! Streaming CSV ingestion.
//!
//! [`DatasetReader`] yields one [`RowOutcome`] per data row, in file order,
//! reusing a single row buffer so memory stays flat regardless of file size.
//! A malformed row becomes a [`RowError`]; it never stops the stream and never
//! affects the decoding of other rows.

use std::borrow::Cow;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::record::{
    Comorbidities, Comorbidity, Field, PatientRecord, RegionKey, Sex, StateCode,
    TriState,
};
use crate::schema::{decode_code, parse_death_date, SchemaConfig};

pub const AGE_CAP: u16 = 150;
const EXCERPT_CHARS: usize = 128;
const SNIFF_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RowErrorKind {
    MissingColumn,
    MalformedDate,
    MalformedInteger,
    EmptyRequired,
    EncodingError,
}

impl RowErrorKind {
    pub const ALL: [RowErrorKind; 5] = [
        RowErrorKind::MissingColumn,
        RowErrorKind::MalformedDate,
        RowErrorKind::MalformedInteger,
        RowErrorKind::EmptyRequired,
        RowErrorKind::EncodingError,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based data-row index; the header is not counted.
    pub row_number: u64,
    /// Semantic field name, or `"row"` for whole-row problems.
    pub field: String,
    pub kind: RowErrorKind,
    pub raw_excerpt: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Record(PatientRecord),
    Rejected(RowError),
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("input has no header row")]
    NoHeader,
    #[error("column {column:?} for field {field} is missing from the header")]
    MissingColumn { field: String, column: String },
}

/// Requested text encoding. `Auto` picks UTF-8 when the input starts with a
/// BOM or its first 64 KiB are valid UTF-8, and Latin-1 otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    #[default]
    Auto,
    Utf8,
    Latin1,
}

impl std::str::FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Encoding::Auto),
            "utf8" | "utf-8" => Ok(Encoding::Utf8),
            "latin1" | "latin-1" | "iso-8859-1" => Ok(Encoding::Latin1),
            other => Err(format!("unknown encoding {other:?}")),
        }
    }
}

/// Encoding actually used for a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextEncoding {
    Utf8,
    Latin1,
}

fn sniff(head: &[u8]) -> TextEncoding {
    if head.starts_with(b"\xEF\xBB\xBF") {
        return TextEncoding::Utf8;
    }
    match std::str::from_utf8(head) {
        Ok(_) => TextEncoding::Utf8,
        // a multi-byte sequence cut by the sniff window is still valid UTF-8
        Err(e) if e.error_len().is_none() => TextEncoding::Utf8,
        Err(_) => TextEncoding::Latin1,
    }
}

fn decode_cell(bytes: &[u8], encoding: TextEncoding) -> Option<Cow<'_, str>> {
    if bytes.is_ascii() {
        // ASCII is valid in both encodings
        return Some(Cow::Borrowed(std::str::from_utf8(bytes).ok()?));
    }
    match encoding {
        TextEncoding::Utf8 => std::str::from_utf8(bytes).ok().map(Cow::Borrowed),
        TextEncoding::Latin1 => Some(Cow::Owned(bytes.iter().map(|&b| b as char).collect())),
    }
}

fn excerpt(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).chars().take(EXCERPT_CHARS).collect()
}

pub struct DatasetReader<'s, R: Read> {
    csv: csv::Reader<R>,
    schema: &'s SchemaConfig,
    encoding: TextEncoding,
    /// Column position per field, indexed like `Field::all()`; `None` when absent.
    positions: Vec<(Field, Option<usize>)>,
    header_len: usize,
    row: csv::ByteRecord,
    rows_read: u64,
    age_capped: u64,
}

/// Opens a CSV file and checks its header against the schema.
pub fn open_dataset<'s>(
    path: &Path,
    schema: &'s SchemaConfig,
    encoding: Encoding,
) -> Result<DatasetReader<'s, BufReader<File>>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    DatasetReader::new(file, schema, encoding)
}

impl<'s, R: Read> DatasetReader<'s, BufReader<R>> {
    pub fn new(input: R, schema: &'s SchemaConfig, encoding: Encoding) -> Result<Self, IngestError> {
        let mut buffered = BufReader::with_capacity(SNIFF_BYTES, input);
        let resolved = match encoding {
            Encoding::Utf8 => TextEncoding::Utf8,
            Encoding::Latin1 => TextEncoding::Latin1,
            Encoding::Auto => {
                let head = buffered.fill_buf().map_err(|source| IngestError::Io {
                    path: "<input>".into(),
                    source,
                })?;
                sniff(head)
            }
        };
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(buffered);
        let header = csv.byte_headers()?.clone();
        if header.is_empty() {
            return Err(IngestError::NoHeader);
        }
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .map(|(i, raw)| {
                let raw = if i == 0 { raw.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(raw) } else { raw };
                decode_cell(raw, resolved)
                    .map(Cow::into_owned)
                    .unwrap_or_else(|| String::from_utf8_lossy(raw).into_owned())
            })
            .collect();

        let mut positions = Vec::new();
        for field in Field::all() {
            let pos = match schema.column(field).column() {
                None => None,
                Some(column) => Some(names.iter().position(|n| n == column).ok_or_else(|| {
                    IngestError::MissingColumn {
                        field: field.name().to_string(),
                        column: column.to_string(),
                    }
                })?),
            };
            positions.push((field, pos));
        }

        Ok(DatasetReader {
            csv,
            schema,
            encoding: resolved,
            positions,
            header_len: names.len(),
            row: csv::ByteRecord::new(),
            rows_read: 0,
            age_capped: 0,
        })
    }
}

impl<'s, R: Read> DatasetReader<'s, R> {
    pub fn encoding(&self) -> TextEncoding {
        self.encoding
    }

    pub fn rows_read(&self) -> u64 {
        self.rows_read
    }

    /// Accepted rows whose age exceeded [`AGE_CAP`] and was capped.
    pub fn age_capped(&self) -> u64 {
        self.age_capped
    }

    /// Pulls up to `max` outcomes into `out` (cleared first). Returns `false` at end of input.
    pub fn next_batch(&mut self, out: &mut Vec<RowOutcome>, max: usize) -> Result<bool, IngestError> {
        out.clear();
        while out.len() < max {
            match self.next() {
                Some(Ok(outcome)) => out.push(outcome),
                Some(Err(e)) => return Err(e),
                None => return Ok(!out.is_empty()),
            }
        }
        Ok(true)
    }
}

impl<'s, R: Read> Iterator for DatasetReader<'s, R> {
    type Item = Result<RowOutcome, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.csv.read_byte_record(&mut self.row) {
            Ok(false) => None,
            Err(e) => Some(Err(e.into())),
            Ok(true) => {
                self.rows_read += 1;
                let parsed = parse_row(
                    &self.row,
                    &RowLayout {
                        positions: &self.positions,
                        header_len: self.header_len,
                        encoding: self.encoding,
                    },
                    self.schema,
                    self.rows_read,
                );
                Some(Ok(match parsed {
                    Ok((record, capped)) => {
                        self.age_capped += u64::from(capped);
                        RowOutcome::Record(record)
                    }
                    Err(e) => RowOutcome::Rejected(e),
                }))
            }
        }
    }
}

/// How the cells of a row line up with semantic fields.
pub struct RowLayout<'a> {
    pub positions: &'a [(Field, Option<usize>)],
    pub header_len: usize,
    pub encoding: TextEncoding,
}

struct Cells<'a> {
    row: &'a csv::ByteRecord,
    layout: &'a RowLayout<'a>,
    row_number: u64,
}

impl<'a> Cells<'a> {
    fn fail(&self, field: Field, kind: RowErrorKind, raw: &[u8]) -> RowError {
        RowError {
            row_number: self.row_number,
            field: field.name().to_string(),
            kind,
            raw_excerpt: excerpt(raw),
        }
    }

    /// Trimmed text of a field; `None` when the schema marks it absent.
    fn text(&self, field: Field) -> Result<Option<Cow<'a, str>>, RowError> {
        let pos = self
            .layout
            .positions
            .iter()
            .find(|(f, _)| *f == field)
            .and_then(|(_, p)| *p);
        let Some(pos) = pos else { return Ok(None) };
        let raw = self
            .row
            .get(pos)
            .ok_or_else(|| self.fail(field, RowErrorKind::MissingColumn, b""))?;
        let text = decode_cell(raw, self.layout.encoding)
            .ok_or_else(|| self.fail(field, RowErrorKind::EncodingError, raw))?;
        Ok(Some(match text {
            Cow::Borrowed(s) => Cow::Borrowed(s.trim()),
            Cow::Owned(s) => Cow::Owned(s.trim().to_string()),
        }))
    }

    fn required(&self, field: Field) -> Result<Cow<'a, str>, RowError> {
        match self.text(field)? {
            Some(t) if !t.is_empty() => Ok(t),
            _ => Err(self.fail(field, RowErrorKind::EmptyRequired, b"")),
        }
    }

    fn state(&self, field: Field) -> Result<Option<StateCode>, RowError> {
        let Some(text) = self.text(field)? else { return Ok(None) };
        if text.is_empty() {
            return Err(self.fail(field, RowErrorKind::EmptyRequired, b""));
        }
        text.parse::<u8>()
            .ok()
            .and_then(StateCode::new)
            .map(Some)
            .ok_or_else(|| self.fail(field, RowErrorKind::MalformedInteger, text.as_bytes()))
    }

    fn code(&self, field: Field) -> Result<String, RowError> {
        Ok(self.text(field)?.map(Cow::into_owned).unwrap_or_default())
    }

    fn flag(&self, field: Field, schema: &SchemaConfig) -> Result<TriState, RowError> {
        Ok(match self.text(field)? {
            Some(code) => decode_code(schema.flag_catalog(field), &code),
            None => TriState::Unspecified,
        })
    }

    fn date(&self, field: Field, schema: &SchemaConfig) -> Result<Option<chrono::NaiveDate>, RowError> {
        match self.text(field)? {
            None => Ok(None),
            Some(text) => parse_death_date(&text, schema)
                .map_err(|_| self.fail(field, RowErrorKind::MalformedDate, text.as_bytes())),
        }
    }
}

/// Decodes one data row. The `bool` is set when the age was capped at [`AGE_CAP`].
///
/// Fields are read in `Field::all()` order and the first failure rejects the row.
pub fn parse_row(
    row: &csv::ByteRecord,
    layout: &RowLayout<'_>,
    schema: &SchemaConfig,
    row_number: u64,
) -> Result<(PatientRecord, bool), RowError> {
    let cells = Cells {
        row,
        layout,
        row_number,
    };
    if row.len() < layout.header_len {
        let short = layout
            .positions
            .iter()
            .find(|(_, p)| p.is_some_and(|p| p >= row.len()));
        if let Some((field, _)) = short {
            return Err(RowError {
                row_number,
                field: field.name().to_string(),
                kind: RowErrorKind::MissingColumn,
                raw_excerpt: excerpt(row.as_slice()),
            });
        }
    }

    let record_id = cells.required(Field::RecordId)?.into_owned();
    let sex = match cells.text(Field::Sex)? {
        Some(code) => decode_code(schema.sex_catalog(), &code),
        None => Sex::Unspecified,
    };
    let age_text = cells.required(Field::Age)?;
    let age: i64 = age_text
        .parse()
        .ok()
        .filter(|a| *a >= 0)
        .ok_or_else(|| cells.fail(Field::Age, RowErrorKind::MalformedInteger, age_text.as_bytes()))?;
    let capped = age > i64::from(AGE_CAP);
    let age = age.min(i64::from(AGE_CAP)) as u16;

    let residence_state = cells.state(Field::ResidenceState)?;
    let municipality = match cells.text(Field::ResidenceMunicipality)? {
        None => None,
        Some(t) if t.is_empty() || schema.is_unspecified_municipality(&t) => None,
        Some(t) => Some(t.parse::<u16>().ok().filter(|m| *m >= 1).ok_or_else(|| {
            cells.fail(Field::ResidenceMunicipality, RowErrorKind::MalformedInteger, t.as_bytes())
        })?),
    };
    let reporting_state = cells
        .state(Field::ReportingState)?
        .expect("reporting state is a required field");

    let patient_type_code = cells.code(Field::PatientType)?;
    let icu_code = cells.code(Field::Icu)?;
    let intubated_code = cells.code(Field::Intubated)?;
    let lab_result_code = cells.required(Field::LabResult)?.into_owned();
    let death_date = cells.date(Field::DeathDate, schema)?;
    let symptom_onset_date = cells.date(Field::SymptomOnsetDate, schema)?;
    let indigenous_speaker = cells.flag(Field::IndigenousSpeaker, schema)?;
    let case_contact = cells.flag(Field::CaseContact, schema)?;
    let travel_history = cells.flag(Field::TravelHistory, schema)?;
    let mut comorbidities = Comorbidities::default();
    for c in Comorbidity::ALL {
        comorbidities.set(c, cells.flag(Field::Comorbidity(c), schema)?);
    }

    let record = PatientRecord {
        record_id,
        sex,
        age,
        residence: RegionKey {
            state: residence_state.unwrap_or(reporting_state),
            municipality,
        },
        reporting_state,
        patient_type_code,
        icu_code,
        intubated_code,
        lab_result_code,
        death_date,
        symptom_onset_date,
        indigenous_speaker,
        case_contact,
        travel_history,
        comorbidities,
    };
    Ok((record, capped))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationWarnings {
    /// Rows kept with their age capped at 150.
    pub age_above_cap: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows_total: u64,
    pub rows_accepted: u64,
    pub rows_rejected: u64,
    pub errors_by_kind: BTreeMap<RowErrorKind, u64>,
    pub first_errors: Vec<RowError>,
    pub warnings: ValidationWarnings,
    /// Rows whose record id was already seen; `None` when not tracked.
    pub duplicate_record_ids: Option<u64>,
    pub encoding: TextEncoding,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Running tally behind a [`ValidationReport`].
#[derive(Debug)]
pub struct ValidationTally {
    rows_total: u64,
    rows_accepted: u64,
    errors_by_kind: BTreeMap<RowErrorKind, u64>,
    first_errors: Vec<RowError>,
    error_cap: usize,
    seen_ids: Option<HashSet<u64>>,
    duplicates: u64,
}

impl ValidationTally {
    /// Keeps at most `error_cap` sample errors. Duplicate tracking holds one
    /// 64-bit fingerprint per distinct id, so it grows with the input.
    pub fn new(error_cap: usize, track_duplicates: bool) -> Self {
        ValidationTally {
            rows_total: 0,
            rows_accepted: 0,
            errors_by_kind: RowErrorKind::ALL.iter().map(|k| (*k, 0)).collect(),
            first_errors: Vec::new(),
            error_cap,
            seen_ids: track_duplicates.then(HashSet::new),
            duplicates: 0,
        }
    }

    pub fn observe(&mut self, outcome: &RowOutcome) {
        self.rows_total += 1;
        match outcome {
            RowOutcome::Record(record) => {
                self.rows_accepted += 1;
                if let Some(seen) = &mut self.seen_ids {
                    let mut h = DefaultHasher::new();
                    record.record_id.hash(&mut h);
                    if !seen.insert(h.finish()) {
                        self.duplicates += 1;
                    }
                }
            }
            RowOutcome::Rejected(error) => {
                *self.errors_by_kind.entry(error.kind).or_default() += 1;
                if self.first_errors.len() < self.error_cap {
                    self.first_errors.push(error.clone());
                }
            }
        }
    }

    pub fn finish(self, age_above_cap: u64, encoding: TextEncoding) -> ValidationReport {
        ValidationReport {
            rows_total: self.rows_total,
            rows_accepted: self.rows_accepted,
            rows_rejected: self.rows_total - self.rows_accepted,
            errors_by_kind: self.errors_by_kind,
            first_errors: self.first_errors,
            warnings: ValidationWarnings { age_above_cap },
            duplicate_record_ids: self.seen_ids.map(|_| self.duplicates),
            encoding,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub encoding: Encoding,
    pub error_cap: usize,
    pub track_duplicates: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            encoding: Encoding::Auto,
            error_cap: 100,
            track_duplicates: true,
        }
    }
}

pub fn validate_dataset(
    path: &Path,
    schema: &SchemaConfig,
    options: ValidateOptions,
) -> Result<ValidationReport, IngestError> {
    let reader = open_dataset(path, schema, options.encoding)?;
    validate_reader(reader, options)
}

pub fn validate_reader<R: Read>(
    mut reader: DatasetReader<'_, R>,
    options: ValidateOptions,
) -> Result<ValidationReport, IngestError> {
    let mut tally = ValidationTally::new(options.error_cap, options.track_duplicates);
    for outcome in reader.by_ref() {
        tally.observe(&outcome?);
    }
    Ok(tally.finish(reader.age_capped(), reader.encoding()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;

    const HEADER: &str = "FECHA_ACTUALIZACION,ID_REGISTRO,ENTIDAD_UM,SEXO,ENTIDAD_RES,MUNICIPIO_RES,TIPO_PACIENTE,FECHA_SINTOMAS,FECHA_DEF,INTUBADO,NEUMONIA,EDAD,HABLA_LENGUA_INDIG,DIABETES,EPOC,ASMA,INMUSUPR,HIPERTENSION,OTRA_COM,CARDIOVASCULAR,OBESIDAD,RENAL_CRONICA,TABAQUISMO,OTRO_CASO,RESULTADO,UCI";

    fn row(id: &str, sex: &str, age: &str, ptype: &str, def: &str, result: &str) -> String {
        format!(
            "2020-08-01,{id},30,{sex},30,124,{ptype},2020-07-01,{def},97,2,{age},1,2,2,2,2,1,2,2,1,2,2,99,{result},97"
        )
    }

    fn read(text: &str) -> Vec<RowOutcome> {
        let p = Profile::default_dge();
        let reader = DatasetReader::new(text.as_bytes(), &p.schema, Encoding::Auto).unwrap();
        reader.map(Result::unwrap).collect()
    }

    #[test]
    fn happy_path_in_order() {
        let text = [
            HEADER.to_string(),
            row("a", "1", "30", "1", "9999-99-99", "1"),
            row("b", "2", "41", "2", "2020-07-15", "2"),
            row("c", "99", "52", "99", "9999-99-99", "3"),
        ]
        .join("\n");
        let out = read(&text);
        let ids: Vec<_> = out
            .iter()
            .map(|o| match o {
                RowOutcome::Record(r) => r.record_id.clone(),
                RowOutcome::Rejected(e) => panic!("{e:?}"),
            })
            .collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let RowOutcome::Record(b) = &out[1] else { unreachable!() };
        assert_eq!(b.sex, Sex::Male);
        assert_eq!(b.death_date, chrono::NaiveDate::from_ymd_opt(2020, 7, 15));
        assert_eq!(b.residence.municipality, Some(124));
        assert_eq!(b.comorbidities.get(Comorbidity::Hypertension), TriState::Yes);
        assert_eq!(b.comorbidities.get(Comorbidity::Diabetes), TriState::No);
        assert_eq!(b.indigenous_speaker, TriState::Yes);
        assert_eq!(b.case_contact, TriState::Unspecified);
    }

    #[test]
    fn missing_header_column_fails_at_open() {
        let p = Profile::default_dge();
        let header = HEADER.replace(",RESULTADO", "");
        let err = DatasetReader::new(header.as_bytes(), &p.schema, Encoding::Auto)
            .err()
            .unwrap();
        assert!(
            matches!(&err, IngestError::MissingColumn { field, .. } if field == "lab_result"),
            "{err}"
        );
    }

    #[test]
    fn bad_row_is_isolated() {
        let text = [
            HEADER.to_string(),
            row("a", "1", "30", "1", "9999-99-99", "1"),
            row("b", "1", "30", "1", "2020-13-40", "1"),
        ]
        .join("\n");
        let out = read(&text);
        assert!(matches!(&out[0], RowOutcome::Record(_)));
        match &out[1] {
            RowOutcome::Rejected(e) => {
                assert_eq!(e.kind, RowErrorKind::MalformedDate);
                assert_eq!(e.row_number, 2);
                assert_eq!(e.field, "death_date");
                assert_eq!(e.raw_excerpt, "2020-13-40");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn row_level_errors() {
        let text = [
            HEADER.to_string(),
            row("a", "1", "-3", "1", "9999-99-99", "1"),
            row("", "1", "30", "1", "9999-99-99", "1"),
            row("c", "1", "abc", "1", "9999-99-99", "1"),
            "2020-08-01,d,30".to_string(),
            row("e", "1", "30", "1", "9999-99-99", ""),
            row("f", "1", "30", "1", "9999-99-99", "1").replacen(",30,", ",33,", 1),
        ]
        .join("\n");
        let kinds: Vec<_> = read(&text)
            .into_iter()
            .map(|o| match o {
                RowOutcome::Rejected(e) => (e.kind, e.field),
                RowOutcome::Record(r) => panic!("accepted {r:?}"),
            })
            .collect();
        assert_eq!(
            kinds,
            [
                (RowErrorKind::MalformedInteger, "age".to_string()),
                (RowErrorKind::EmptyRequired, "record_id".to_string()),
                (RowErrorKind::MalformedInteger, "age".to_string()),
                (RowErrorKind::MissingColumn, "sex".to_string()),
                (RowErrorKind::EmptyRequired, "lab_result".to_string()),
                (RowErrorKind::MalformedInteger, "reporting_state".to_string()),
            ]
        );
    }

    #[test]
    fn unknown_codes_decode_to_unspecified() {
        let line = "2020-08-01,z,30,99,30,999,99,2020-07-01,9999-99-99,99,99,60,99,99,99,99,99,99,99,99,99,99,99,99,1,99";
        let out = read(&format!("{HEADER}\n{line}"));
        let RowOutcome::Record(r) = &out[0] else { panic!("{out:?}") };
        assert_eq!(r.sex, Sex::Unspecified);
        assert_eq!(r.indigenous_speaker, TriState::Unspecified);
        assert!(r.comorbidities.iter().all(|(_, v)| v == TriState::Unspecified));
        assert_eq!(r.residence.municipality, None);
    }

    #[test]
    fn age_above_cap_is_a_warning() {
        let p = Profile::default_dge();
        let text = format!("{HEADER}\n{}", row("a", "1", "170", "1", "9999-99-99", "1"));
        let reader = DatasetReader::new(text.as_bytes(), &p.schema, Encoding::Auto).unwrap();
        let report = validate_reader(reader, ValidateOptions::default()).unwrap();
        assert_eq!(report.rows_accepted, 1);
        assert_eq!(report.warnings.age_above_cap, 1);
    }

    #[test]
    fn quoted_fields_and_crlf() {
        let text = format!(
            "{HEADER}\r\n{}\r\n",
            row("\"a,1\"", "1", "30", "1", "9999-99-99", "1")
        );
        let out = read(&text);
        let RowOutcome::Record(r) = &out[0] else { panic!("{out:?}") };
        assert_eq!(r.record_id, "a,1");
    }

    #[test]
    fn latin1_and_utf8_detection() {
        let p = Profile::default_dge();
        let mut bytes = HEADER.as_bytes().to_vec();
        bytes.push(b'\n');
        bytes.extend(row("Pe\u{f1}a", "1", "30", "1", "9999-99-99", "1").as_bytes());
        let utf8 = DatasetReader::new(bytes.as_slice(), &p.schema, Encoding::Auto).unwrap();
        assert_eq!(utf8.encoding(), TextEncoding::Utf8);

        let latin: Vec<u8> = String::from_utf8(bytes.clone())
            .unwrap()
            .chars()
            .map(|c| c as u32 as u8)
            .collect();
        let mut reader = DatasetReader::new(latin.as_slice(), &p.schema, Encoding::Auto).unwrap();
        assert_eq!(reader.encoding(), TextEncoding::Latin1);
        match reader.next().unwrap().unwrap() {
            RowOutcome::Record(r) => assert_eq!(r.record_id, "Pe\u{f1}a"),
            other => panic!("{other:?}"),
        }

        let mut forced = DatasetReader::new(latin.as_slice(), &p.schema, Encoding::Utf8).unwrap();
        match forced.next().unwrap().unwrap() {
            RowOutcome::Rejected(e) => assert_eq!(e.kind, RowErrorKind::EncodingError),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bom_forces_utf8_and_is_stripped() {
        let p = Profile::default_dge();
        let mut bytes = b"\xEF\xBB\xBF".to_vec();
        bytes.extend(HEADER.replace("FECHA_ACTUALIZACION,", "").as_bytes());
        bytes.push(b'\n');
        bytes.extend(row("\u{ff}", "1", "30", "1", "9999-99-99", "1").replace("2020-08-01,", "").as_bytes());
        let mut reader = DatasetReader::new(bytes.as_slice(), &p.schema, Encoding::Auto).unwrap();
        assert_eq!(reader.encoding(), TextEncoding::Utf8);
        assert!(matches!(reader.next().unwrap().unwrap(), RowOutcome::Record(_)));
    }

    #[test]
    fn empty_file_with_header() {
        let p = Profile::default_dge();
        let reader = DatasetReader::new(HEADER.as_bytes(), &p.schema, Encoding::Auto).unwrap();
        let report = validate_reader(reader, ValidateOptions::default()).unwrap();
        assert_eq!(report.rows_total, 0);
        assert_eq!(report.rows_accepted + report.rows_rejected, 0);
    }

    #[test]
    fn duplicates_are_counted_not_dropped() {
        let p = Profile::default_dge();
        let text = [
            HEADER.to_string(),
            row("a", "1", "30", "1", "9999-99-99", "1"),
            row("a", "1", "30", "1", "9999-99-99", "1"),
            row("b", "1", "30", "1", "9999-99-99", "1"),
        ]
        .join("\n");
        let reader = DatasetReader::new(text.as_bytes(), &p.schema, Encoding::Auto).unwrap();
        let report = validate_reader(reader, ValidateOptions::default()).unwrap();
        assert_eq!(report.rows_accepted, 3);
        assert_eq!(report.duplicate_record_ids, Some(1));
    }

    #[test]
    fn error_sample_is_capped() {
        let p = Profile::default_dge();
        let mut lines = vec![HEADER.to_string()];
        for i in 0..10 {
            lines.push(row(&format!("r{i}"), "1", "x", "1", "9999-99-99", "1"));
        }
        let text = lines.join("\n");
        let reader = DatasetReader::new(text.as_bytes(), &p.schema, Encoding::Auto).unwrap();
        let report = validate_reader(
            reader,
            ValidateOptions {
                error_cap: 3,
                ..ValidateOptions::default()
            },
        )
        .unwrap();
        assert_eq!(report.rows_rejected, 10);
        assert_eq!(report.errors_by_kind[&RowErrorKind::MalformedInteger], 10);
        assert_eq!(report.first_errors.len(), 3);
        assert_eq!(report.first_errors[0].row_number, 1);
    }
}
