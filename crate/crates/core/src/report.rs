//! Serialization of report tables and the choropleth join.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::aggregate::{FatalityRateRow, RegionLabel};
use crate::table::{Cell, Rate, ReportTable};

/// RFC-4180 CSV: a header of `row_header` plus the column labels, then one
/// line per row. Rates use two decimals; undefined rates are empty cells.
pub fn emit_csv(table: &ReportTable) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let header = std::iter::once(table.row_header.as_str()).chain(table.columns.iter().map(String::as_str));
    w.write_record(header).expect("in-memory write");
    for (label, row) in table.rows.iter().zip(&table.cells) {
        let mut fields = Vec::with_capacity(row.len() + 1);
        fields.push(label.clone());
        fields.extend(row.iter().map(|cell| match cell {
            Cell::Count(n) => n.to_string(),
            Cell::Rate(r) => r.to_fixed().unwrap_or_default(),
        }));
        w.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Pretty JSON object `{kind, row_header, columns, rows, cells}` with a trailing newline.
pub fn emit_json(table: &ReportTable) -> String {
    let mut text = serde_json::to_string_pretty(table).expect("table serializes");
    text.push('\n');
    text
}

pub fn parse_json(text: &str) -> Result<ReportTable, serde_json::Error> {
    serde_json::from_str(text)
}

/// A rate row keyed by a raw region code, as joined onto boundary features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionRate {
    pub code: u32,
    pub deaths: u64,
    pub positives: u64,
    pub rate: Rate,
}

impl RegionRate {
    /// State rows only; `Total` and municipality rows are dropped.
    pub fn from_state_rows(rows: &[FatalityRateRow]) -> Vec<RegionRate> {
        rows.iter()
            .filter_map(|row| match row.region {
                RegionLabel::State(s) => Some(RegionRate {
                    code: u32::from(s.code()),
                    deaths: row.deaths,
                    positives: row.positives,
                    rate: row.rate,
                }),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChoroplethError {
    #[error("region {0} appears more than once in the rates")]
    DuplicateRegion(u32),
    #[error("boundaries are not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("boundaries are not a GeoJSON FeatureCollection")]
    NotFeatureCollection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choropleth {
    pub geojson: String,
    /// Region codes present in the rates but matched by no feature, ascending.
    pub join_misses: Vec<u32>,
    pub matched_features: usize,
}

fn join_code(value: &Value) -> Option<u32> {
    match value {
        Value::Number(n) => n.as_u64().and_then(|v| u32::try_from(v).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Adds `deaths`, `positives` and `rate_percent` to every feature whose
/// `join_key` property holds a known region code (integer or zero-padded
/// string). Unmatched features get `rate_percent: null`. Geometry and every
/// other member are carried through untouched.
pub fn emit_choropleth(
    rates: &[RegionRate],
    boundaries: &str,
    join_key: &str,
) -> Result<Choropleth, ChoroplethError> {
    let mut by_code = BTreeMap::new();
    for rate in rates {
        if by_code.insert(rate.code, *rate).is_some() {
            return Err(ChoroplethError::DuplicateRegion(rate.code));
        }
    }
    let mut doc: Value = serde_json::from_str(boundaries)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(ChoroplethError::NotFeatureCollection);
    }
    let features = doc
        .get_mut("features")
        .and_then(Value::as_array_mut)
        .ok_or(ChoroplethError::NotFeatureCollection)?;

    let mut seen = BTreeMap::new();
    for feature in features.iter_mut() {
        let feature = feature.as_object_mut().ok_or(ChoroplethError::NotFeatureCollection)?;
        let props = feature
            .entry("properties")
            .or_insert_with(|| Value::Object(Map::new()));
        if props.is_null() {
            *props = Value::Object(Map::new());
        }
        let props = props.as_object_mut().ok_or(ChoroplethError::NotFeatureCollection)?;
        let hit = props.get(join_key).and_then(join_code).and_then(|c| by_code.get(&c));
        match hit {
            Some(rate) => {
                seen.insert(rate.code, ());
                props.insert("deaths".into(), Value::from(rate.deaths));
                props.insert("positives".into(), Value::from(rate.positives));
                let pct = match rate.rate.to_fixed() {
                    Some(s) => Value::Number(s.parse().expect("fixed-point text is a JSON number")),
                    None => Value::Null,
                };
                props.insert("rate_percent".into(), pct);
            }
            None => {
                props.insert("rate_percent".into(), Value::Null);
            }
        }
    }
    let join_misses = by_code.keys().filter(|c| !seen.contains_key(*c)).copied().collect();
    let mut geojson = serde_json::to_string(&doc)?;
    geojson.push('\n');
    Ok(Choropleth {
        geojson,
        join_misses,
        matched_features: seen.len(),
    })
}

/// Writes files into one directory atomically (temp file + rename). Unless
/// [`OutputSet::commit`] is called, every file written so far is removed on drop.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    /// Creates `dir` if needed and checks that it accepts new files.
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        tempfile::NamedTempFile::new_in(dir)?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> io::Result<PathBuf> {
        let target = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(contents)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| e.error)?;
        self.written.push(target.clone());
        Ok(target)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.written {
                let _ = fs::remove_file(path);
            }
        }
    }
}
