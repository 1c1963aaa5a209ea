//! Tabular result types shared by the aggregator, the emitters and any
//! independent re-computation of the same tables.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// A percentage held as an exact count of hundredths, or undefined for an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rate {
    Percent { hundredths: u64 },
    Undefined,
}

impl Rate {
    pub fn from_hundredths(hundredths: u64) -> Self {
        Rate::Percent { hundredths }
    }

    pub fn hundredths(self) -> Option<u64> {
        match self {
            Rate::Percent { hundredths } => Some(hundredths),
            Rate::Undefined => None,
        }
    }

    /// `"10.93"`, or `None` when undefined.
    pub fn to_fixed(self) -> Option<String> {
        self.hundredths()
            .map(|h| format!("{}.{:02}", h / 100, h % 100))
    }

    pub fn parse_fixed(text: &str) -> Option<Rate> {
        let (whole, frac) = text.split_once('.')?;
        if frac.len() != 2 || whole.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let whole: u64 = whole.parse().ok()?;
        let frac: u64 = frac.parse().ok()?;
        Some(Rate::from_hundredths(whole * 100 + frac))
    }
}

impl fmt::Display for Rate {
    /// Undefined renders as an em dash for human-facing summaries.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_fixed() {
            Some(s) => f.write_str(&s),
            None => f.write_str("\u{2014}"),
        }
    }
}

/// Same wire form as a rate cell: `"x.yz"` or `null`.
impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_fixed().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match Option::<String>::deserialize(deserializer)? {
            None => Ok(Rate::Undefined),
            Some(s) => Rate::parse_fixed(&s).ok_or_else(|| de::Error::custom(format!("bad rate {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Count(u64),
    Rate(Rate),
}

impl Cell {
    pub fn count(self) -> Option<u64> {
        match self {
            Cell::Count(n) => Some(n),
            Cell::Rate(_) => None,
        }
    }

    pub fn rate(self) -> Option<Rate> {
        match self {
            Cell::Rate(r) => Some(r),
            Cell::Count(_) => None,
        }
    }
}

/// JSON form: counts are integers, rates are `"x.yz"` strings, undefined rates are `null`.
impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Count(n) => serializer.serialize_u64(*n),
            Cell::Rate(r) => match r.to_fixed() {
                Some(s) => serializer.serialize_str(&s),
                None => serializer.serialize_none(),
            },
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct CellVisitor;

        impl<'de> de::Visitor<'de> for CellVisitor {
            type Value = Cell;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a count, a \"x.yz\" rate string, or null")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Cell, E> {
                Ok(Cell::Count(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Cell, E> {
                u64::try_from(v)
                    .map(Cell::Count)
                    .map_err(|_| E::custom("negative count"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Cell, E> {
                Rate::parse_fixed(v)
                    .map(Cell::Rate)
                    .ok_or_else(|| E::custom(format!("bad rate {v:?}")))
            }

            fn visit_unit<E: de::Error>(self) -> Result<Cell, E> {
                Ok(Cell::Rate(Rate::Undefined))
            }

            fn visit_none<E: de::Error>(self) -> Result<Cell, E> {
                Ok(Cell::Rate(Rate::Undefined))
            }

            fn visit_map<A: de::MapAccess<'de>>(self, map: A) -> Result<Cell, A::Error> {
                // serde_json's arbitrary_precision numbers arrive as a one-entry map
                let value = serde_json::Value::deserialize(de::value::MapAccessDeserializer::new(map))?;
                value
                    .as_u64()
                    .map(Cell::Count)
                    .ok_or_else(|| de::Error::custom(format!("bad cell {value}")))
            }
        }

        deserializer.deserialize_any(CellVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportKind {
    ResultBySex,
    CareByResult,
    CareBySex,
    IcuAmongHospitalizedPositives,
    IntubationAmongIcu,
    DeathsSummary,
    FatalityByState,
    ComorbidityFrequencies,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown report kind {0:?}")]
pub struct UnknownKind(pub String);

impl ReportKind {
    pub const ALL: [ReportKind; 8] = [
        ReportKind::ResultBySex,
        ReportKind::CareByResult,
        ReportKind::CareBySex,
        ReportKind::IcuAmongHospitalizedPositives,
        ReportKind::IntubationAmongIcu,
        ReportKind::DeathsSummary,
        ReportKind::FatalityByState,
        ReportKind::ComorbidityFrequencies,
    ];

    /// Snake-case name, also the output file stem.
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::ResultBySex => "result_by_sex",
            ReportKind::CareByResult => "care_by_result",
            ReportKind::CareBySex => "care_by_sex",
            ReportKind::IcuAmongHospitalizedPositives => "icu_among_hospitalized_positives",
            ReportKind::IntubationAmongIcu => "intubation_among_icu",
            ReportKind::DeathsSummary => "deaths_summary",
            ReportKind::FatalityByState => "fatality_by_state",
            ReportKind::ComorbidityFrequencies => "comorbidity_frequencies",
        }
    }
}

impl FromStr for ReportKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ReportKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ReportKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(de::Error::custom)
    }
}

/// A labelled cross-tab. Margins, when the kind has them, are ordinary rows
/// and columns labelled `Total`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTable {
    pub kind: ReportKind,
    /// Label of the row-label column.
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

impl ReportTable {
    pub fn new(kind: ReportKind, row_header: impl Into<String>, columns: Vec<String>) -> Self {
        ReportTable {
            kind,
            row_header: row_header.into(),
            columns,
            rows: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn push_row(&mut self, label: impl Into<String>, cells: Vec<Cell>) {
        assert_eq!(
            cells.len(),
            self.columns.len(),
            "row width must match the column count"
        );
        self.rows.push(label.into());
        self.cells.push(cells);
    }

    pub fn is_rectangular(&self) -> bool {
        self.rows.len() == self.cells.len()
            && self.cells.iter().all(|r| r.len() == self.columns.len())
    }

    pub fn cell(&self, row: &str, column: &str) -> Option<Cell> {
        let r = self.rows.iter().position(|l| l == row)?;
        let c = self.columns.iter().position(|l| l == column)?;
        Some(self.cells[r][c])
    }

    pub fn count(&self, row: &str, column: &str) -> Option<u64> {
        self.cell(row, column).and_then(Cell::count)
    }
}
