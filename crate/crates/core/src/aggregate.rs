//! Mergeable stratified counters and the rates derived from them.
//!
//! A [`CohortAccumulator`] holds one dense counter per combination of
//! (state, sex, test status, care status, ICU status, intubation status,
//! vital status). Its size is fixed by those domains, never by the number of
//! records, and two accumulators merge by cell-wise addition, so any split of
//! the input across workers yields the same result.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::classify::{Classification, IcuStatus, IntubationStatus, TestStatus, VitalStatus};
use crate::record::{
    CareStatus, Comorbidity, PatientRecord, RegionKey, Sex, StateCode, TriState,
    COMORBIDITY_COUNT, STATE_COUNT,
};
use crate::table::{Cell, Rate, ReportKind, ReportTable, UnknownKind};

/// Which state a record is attributed to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionBasis {
    /// State of the reporting medical unit.
    #[default]
    Reporting,
    Residence,
}

impl RegionBasis {
    pub fn state_of(self, record: &PatientRecord) -> StateCode {
        match self {
            RegionBasis::Reporting => record.reporting_state,
            RegionBasis::Residence => record.residence.state,
        }
    }
}

impl std::str::FromStr for RegionBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reporting" => Ok(RegionBasis::Reporting),
            "residence" => Ok(RegionBasis::Residence),
            other => Err(format!("unknown region basis {other:?}; expected reporting or residence")),
        }
    }
}

/// Record selection. The default filter accepts everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortFilter {
    pub indigenous_only: bool,
    /// Matched against the accumulator's region basis.
    pub states: Option<BTreeSet<StateCode>>,
    /// Matched against the residence region.
    pub municipalities: Option<BTreeSet<RegionKey>>,
    /// Inclusive window on symptom onset; records without an onset date fail it.
    pub date_window: Option<(NaiveDate, NaiveDate)>,
}

impl CohortFilter {
    pub fn accepts(&self, record: &PatientRecord, basis: RegionBasis) -> bool {
        if self.indigenous_only && record.indigenous_speaker != TriState::Yes {
            return false;
        }
        if let Some(states) = &self.states {
            if !states.contains(&basis.state_of(record)) {
                return false;
            }
        }
        if let Some(regions) = &self.municipalities {
            if !regions.contains(&record.residence) {
                return false;
            }
        }
        if let Some((start, end)) = self.date_window {
            match record.symptom_onset_date {
                Some(d) if d >= start && d <= end => {}
                _ => return false,
            }
        }
        true
    }
}

const SEXES: usize = 3;
const TESTS: usize = 3;
const CARES: usize = 3;
const ICUS: usize = 4;
const INTUBATIONS: usize = 4;
const VITALS: usize = 2;
const CELLS: usize = STATE_COUNT * SEXES * TESTS * CARES * ICUS * INTUBATIONS * VITALS;

/// Coordinates of one primary counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub state: StateCode,
    pub sex: Sex,
    pub test: TestStatus,
    pub care: CareStatus,
    pub icu: IcuStatus,
    pub intubation: IntubationStatus,
    pub vital: VitalStatus,
}

impl CellKey {
    fn index(&self) -> usize {
        let mut i = self.state.index();
        i = i * SEXES + self.sex.index();
        i = i * TESTS + self.test as usize;
        i = i * CARES + self.care.index();
        i = i * ICUS + self.icu as usize;
        i = i * INTUBATIONS + self.intubation as usize;
        i * VITALS + self.vital as usize
    }

    fn from_index(mut i: usize) -> Self {
        let vital = VitalStatus::ALL[i % VITALS];
        i /= VITALS;
        let intubation = IntubationStatus::ALL[i % INTUBATIONS];
        i /= INTUBATIONS;
        let icu = IcuStatus::ALL[i % ICUS];
        i /= ICUS;
        let care = CareStatus::ALL[i % CARES];
        i /= CARES;
        let test = TestStatus::ALL[i % TESTS];
        i /= TESTS;
        let sex = Sex::ALL[i % SEXES];
        i /= SEXES;
        CellKey {
            state: StateCode::from_index(i),
            sex,
            test,
            care,
            icu,
            intubation,
            vital,
        }
    }
}

/// Positives and positive deaths for one region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub positives: u64,
    pub deaths: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortAccumulator {
    basis: RegionBasis,
    cells: Vec<u64>,
    /// Yes/No/Unspecified per comorbidity, among hospitalized positives.
    comorbidities: [[u64; 3]; COMORBIDITY_COUNT],
    /// Residence municipality → positives/deaths.
    municipal: BTreeMap<RegionKey, RegionCounts>,
    intubated_outside_icu: u64,
    rejected_rows: u64,
}

impl Default for CohortAccumulator {
    fn default() -> Self {
        CohortAccumulator::new(RegionBasis::default())
    }
}

impl CohortAccumulator {
    pub fn new(basis: RegionBasis) -> Self {
        CohortAccumulator {
            basis,
            cells: vec![0; CELLS],
            comorbidities: [[0; 3]; COMORBIDITY_COUNT],
            municipal: BTreeMap::new(),
            intubated_outside_icu: 0,
            rejected_rows: 0,
        }
    }

    pub fn basis(&self) -> RegionBasis {
        self.basis
    }

    /// Adds one record when the filter accepts it. Returns whether it was counted.
    pub fn accumulate(
        &mut self,
        record: &PatientRecord,
        classification: &Classification,
        filter: &CohortFilter,
    ) -> bool {
        if !filter.accepts(record, self.basis) {
            return false;
        }
        let key = CellKey {
            state: self.basis.state_of(record),
            sex: record.sex,
            test: classification.test_status,
            care: classification.care_status,
            icu: classification.icu_status,
            intubation: classification.intubation_status,
            vital: classification.vital_status,
        };
        self.cells[key.index()] += 1;

        if classification.test_status == TestStatus::Positive {
            let deceased = classification.vital_status == VitalStatus::Deceased;
            let region = self.municipal.entry(record.residence).or_default();
            region.positives += 1;
            region.deaths += u64::from(deceased);
            if classification.care_status == CareStatus::Hospitalized {
                for (c, value) in record.comorbidities.iter() {
                    self.comorbidities[c.index()][value.index()] += 1;
                }
            }
        }
        if classification.intubated_outside_icu {
            self.intubated_outside_icu += 1;
        }
        true
    }

    pub fn note_rejected(&mut self, rows: u64) {
        self.rejected_rows += rows;
    }

    /// Cell-wise sum. Both sides must use the same region basis.
    pub fn merge(mut self, other: &CohortAccumulator) -> CohortAccumulator {
        self.merge_from(other);
        self
    }

    pub fn merge_from(&mut self, other: &CohortAccumulator) {
        assert_eq!(
            self.basis, other.basis,
            "accumulators built with different region bases cannot be merged"
        );
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a += b;
        }
        for (a, b) in self.comorbidities.iter_mut().zip(&other.comorbidities) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (region, counts) in &other.municipal {
            let mine = self.municipal.entry(*region).or_default();
            mine.positives += counts.positives;
            mine.deaths += counts.deaths;
        }
        self.intubated_outside_icu += other.intubated_outside_icu;
        self.rejected_rows += other.rejected_rows;
    }

    /// Non-zero primary counters, in index order.
    pub fn nonzero_cells(&self) -> impl Iterator<Item = (CellKey, u64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(i, n)| (CellKey::from_index(i), *n))
    }

    pub fn get(&self, key: &CellKey) -> u64 {
        self.cells[key.index()]
    }

    fn sum_where(&self, pred: impl Fn(&CellKey) -> bool) -> u64 {
        self.nonzero_cells()
            .filter(|(k, _)| pred(k))
            .map(|(_, n)| n)
            .sum()
    }

    /// Records accumulated.
    pub fn grand_total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn test_total(&self, status: TestStatus) -> u64 {
        self.sum_where(|k| k.test == status)
    }

    pub fn positive_deaths(&self) -> u64 {
        self.sum_where(|k| k.test == TestStatus::Positive && k.vital == VitalStatus::Deceased)
    }

    pub fn comorbidity_counts(&self, which: Comorbidity) -> [u64; 3] {
        self.comorbidities[which.index()]
    }

    pub fn municipal(&self) -> &BTreeMap<RegionKey, RegionCounts> {
        &self.municipal
    }

    pub fn intubated_outside_icu(&self) -> u64 {
        self.intubated_outside_icu
    }

    pub fn rejected_rows(&self) -> u64 {
        self.rejected_rows
    }

    /// Approximate heap bytes held by the accumulator.
    pub fn footprint_bytes(&self) -> usize {
        self.cells.capacity() * std::mem::size_of::<u64>()
            + self.municipal.len()
                * (std::mem::size_of::<RegionKey>() + std::mem::size_of::<RegionCounts>() + 16)
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            region_basis: self.basis,
            cells: self.nonzero_cells().map(|(key, count)| SnapshotCell { key, count }).collect(),
            comorbidities: Comorbidity::ALL
                .iter()
                .map(|c| (c.name().to_string(), self.comorbidities[c.index()]))
                .collect(),
            municipal: self
                .municipal
                .iter()
                .map(|(region, counts)| SnapshotRegion {
                    region: *region,
                    counts: *counts,
                })
                .collect(),
            intubated_outside_icu: self.intubated_outside_icu,
            rejected_rows: self.rejected_rows,
        }
    }

    pub fn from_snapshot(snapshot: &Snapshot) -> Result<Self, SnapshotError> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version(snapshot.version));
        }
        let mut acc = CohortAccumulator::new(snapshot.region_basis);
        for cell in &snapshot.cells {
            acc.cells[cell.key.index()] += cell.count;
        }
        for (name, counts) in &snapshot.comorbidities {
            let c = Comorbidity::ALL
                .iter()
                .find(|c| c.name() == name)
                .ok_or_else(|| SnapshotError::UnknownComorbidity(name.clone()))?;
            acc.comorbidities[c.index()] = *counts;
        }
        for r in &snapshot.municipal {
            acc.municipal.insert(r.region, r.counts);
        }
        acc.intubated_outside_icu = snapshot.intubated_outside_icu;
        acc.rejected_rows = snapshot.rejected_rows;
        Ok(acc)
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// Serializable counter dump, for resumable runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub region_basis: RegionBasis,
    pub cells: Vec<SnapshotCell>,
    pub comorbidities: BTreeMap<String, [u64; 3]>,
    pub municipal: Vec<SnapshotRegion>,
    pub intubated_outside_icu: u64,
    pub rejected_rows: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotCell {
    pub key: CellKey,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRegion {
    pub region: RegionKey,
    pub counts: RegionCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("unknown comorbidity {0:?} in snapshot")]
    UnknownComorbidity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{deaths} deaths over zero positives")]
pub struct InconsistentCounts {
    pub deaths: u64,
}

/// `100 * num / den`, rounded half-up to two decimals with integer arithmetic.
fn percent_half_up(num: u64, den: u64) -> Rate {
    if den == 0 {
        return Rate::Undefined;
    }
    let (num, den) = (u128::from(num), u128::from(den));
    let hundredths = (20_000 * num + den) / (2 * den);
    Rate::from_hundredths(hundredths as u64)
}

/// Case fatality rate: deaths among positives over positives, as a percentage.
pub fn fatality_rate(deaths: u64, positives: u64) -> Result<Rate, InconsistentCounts> {
    if positives == 0 && deaths > 0 {
        return Err(InconsistentCounts { deaths });
    }
    Ok(percent_half_up(deaths, positives))
}

/// Share of deaths that happened in ICU with intubation.
pub fn icu_intubated_death_share(icu_intubated_deaths: u64, all_deaths: u64) -> Rate {
    percent_half_up(icu_intubated_deaths, all_deaths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    State(StateCode),
    Municipality(RegionKey),
    Total,
}

impl RegionLabel {
    pub fn label(&self) -> String {
        match self {
            RegionLabel::State(s) => s.to_string(),
            RegionLabel::Municipality(r) => match r.municipality {
                Some(m) => format!("{}-{m}", r.state),
                None => format!("{}-unspecified", r.state),
            },
            RegionLabel::Total => "Total".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FatalityRateRow {
    pub region: RegionLabel,
    pub deaths: u64,
    pub positives: u64,
    pub rate: Rate,
}

impl FatalityRateRow {
    fn new(region: RegionLabel, deaths: u64, positives: u64) -> Self {
        let rate = fatality_rate(deaths, positives).expect("deaths are counted among positives");
        FatalityRateRow {
            region,
            deaths,
            positives,
            rate,
        }
    }
}

/// One row per state (1..=32, in order) plus a `Total` row.
pub fn fatality_rows_by_state(acc: &CohortAccumulator) -> Vec<FatalityRateRow> {
    let mut per_state = [(0u64, 0u64); STATE_COUNT];
    for (key, n) in acc.nonzero_cells() {
        if key.test == TestStatus::Positive {
            let slot = &mut per_state[key.state.index()];
            slot.1 += n;
            if key.vital == VitalStatus::Deceased {
                slot.0 += n;
            }
        }
    }
    let mut rows: Vec<_> = StateCode::all()
        .map(|s| {
            let (d, p) = per_state[s.index()];
            FatalityRateRow::new(RegionLabel::State(s), d, p)
        })
        .collect();
    let (d, p) = per_state
        .iter()
        .fold((0, 0), |(d, p), (sd, sp)| (d + sd, p + sp));
    rows.push(FatalityRateRow::new(RegionLabel::Total, d, p));
    rows
}

/// One row per residence municipality with at least one positive, plus a `Total` row.
pub fn fatality_rows_by_municipality(acc: &CohortAccumulator) -> Vec<FatalityRateRow> {
    let mut rows: Vec<_> = acc
        .municipal
        .iter()
        .map(|(region, c)| FatalityRateRow::new(RegionLabel::Municipality(*region), c.deaths, c.positives))
        .collect();
    let (d, p) = acc
        .municipal
        .values()
        .fold((0, 0), |(d, p), c| (d + c.deaths, p + c.positives));
    rows.push(FatalityRateRow::new(RegionLabel::Total, d, p));
    rows
}

pub fn build_table_named(acc: &CohortAccumulator, kind: &str) -> Result<ReportTable, UnknownKind> {
    Ok(build_table(acc, kind.parse()?))
}

const SEX_LABELS: [&str; 3] = ["Women", "Men", "Unspecified"];
const TEST_LABELS: [&str; 3] = ["Positive", "Negative", "Pending"];
const CARE_LABELS: [&str; 3] = ["Ambulatory", "Hospitalized", "Unspecified"];

/// Two-way count grid with margins. The third category of each axis (the
/// "Unspecified" slot, when the axis has one) is shown only when non-zero.
fn cross_tab(
    kind: ReportKind,
    row_header: &str,
    row_labels: &[&str],
    row_optional_last: bool,
    col_labels: &[&str],
    col_optional_last: bool,
    grid: &[Vec<u64>],
) -> ReportTable {
    let row_sum = |r: usize| grid[r].iter().sum::<u64>();
    let col_sum = |c: usize| grid.iter().map(|row| row[c]).sum::<u64>();
    let rows: Vec<usize> = (0..row_labels.len())
        .filter(|&r| !(row_optional_last && r == row_labels.len() - 1 && row_sum(r) == 0))
        .collect();
    let cols: Vec<usize> = (0..col_labels.len())
        .filter(|&c| !(col_optional_last && c == col_labels.len() - 1 && col_sum(c) == 0))
        .collect();

    let mut columns: Vec<String> = cols.iter().map(|&c| col_labels[c].to_string()).collect();
    columns.push("Total".into());
    let mut table = ReportTable::new(kind, row_header, columns);
    for &r in &rows {
        let mut cells: Vec<Cell> = cols.iter().map(|&c| Cell::Count(grid[r][c])).collect();
        cells.push(Cell::Count(row_sum(r)));
        table.push_row(row_labels[r], cells);
    }
    let mut totals: Vec<Cell> = cols.iter().map(|&c| Cell::Count(col_sum(c))).collect();
    totals.push(Cell::Count(grid.iter().map(|row| row.iter().sum::<u64>()).sum()));
    table.push_row("Total", totals);
    table
}

/// Single-row distribution with a total, optional trailing category.
fn one_row(kind: ReportKind, row_header: &str, row_label: &str, labels: &[&str], counts: &[u64]) -> ReportTable {
    let last = labels.len() - 1;
    let cols: Vec<usize> = (0..labels.len()).filter(|&c| c != last || counts[c] > 0).collect();
    let mut columns: Vec<String> = cols.iter().map(|&c| labels[c].to_string()).collect();
    columns.push("Total".into());
    let mut table = ReportTable::new(kind, row_header, columns);
    let mut cells: Vec<Cell> = cols.iter().map(|&c| Cell::Count(counts[c])).collect();
    cells.push(Cell::Count(counts.iter().sum()));
    table.push_row(row_label, cells);
    table
}

pub fn build_table(acc: &CohortAccumulator, kind: ReportKind) -> ReportTable {
    match kind {
        ReportKind::ResultBySex => {
            let mut grid = vec![vec![0u64; 3]; 3];
            for (k, n) in acc.nonzero_cells() {
                grid[k.test as usize][k.sex.index()] += n;
            }
            cross_tab(kind, "Result", &TEST_LABELS, false, &SEX_LABELS, true, &grid)
        }
        ReportKind::CareByResult => {
            let mut grid = vec![vec![0u64; 3]; 3];
            for (k, n) in acc.nonzero_cells() {
                grid[k.test as usize][k.care.index()] += n;
            }
            cross_tab(kind, "Result", &TEST_LABELS, false, &CARE_LABELS, true, &grid)
        }
        ReportKind::CareBySex => {
            let mut grid = vec![vec![0u64; 3]; 3];
            for (k, n) in acc.nonzero_cells() {
                grid[k.sex.index()][k.care.index()] += n;
            }
            cross_tab(kind, "Sex", &SEX_LABELS, true, &CARE_LABELS, true, &grid)
        }
        ReportKind::IcuAmongHospitalizedPositives => {
            let mut counts = [0u64; 3];
            for (k, n) in acc.nonzero_cells() {
                if k.test == TestStatus::Positive && k.care == CareStatus::Hospitalized {
                    let slot = match k.icu {
                        IcuStatus::InIcu => 0,
                        IcuStatus::NotInIcu => 1,
                        IcuStatus::Unspecified => 2,
                        IcuStatus::NotApplicable => unreachable!("hospitalized records have an ICU answer"),
                    };
                    counts[slot] += n;
                }
            }
            one_row(kind, "Patient type", "Hospitalized", &["ICU", "No ICU", "Unspecified"], &counts)
        }
        ReportKind::IntubationAmongIcu => {
            let mut counts = [0u64; 3];
            for (k, n) in acc.nonzero_cells() {
                if k.test == TestStatus::Positive
                    && k.care == CareStatus::Hospitalized
                    && k.icu == IcuStatus::InIcu
                {
                    let slot = match k.intubation {
                        IntubationStatus::Intubated => 0,
                        IntubationStatus::NotIntubated => 1,
                        IntubationStatus::Unspecified => 2,
                        IntubationStatus::NotApplicable => unreachable!("ICU records have an intubation answer"),
                    };
                    counts[slot] += n;
                }
            }
            one_row(
                kind,
                "Patient type",
                "Hospitalized ICU",
                &["Intubated", "Not intubated", "Unspecified"],
                &counts,
            )
        }
        ReportKind::DeathsSummary => deaths_summary(acc),
        ReportKind::FatalityByState => {
            let mut table = ReportTable::new(
                kind,
                "State",
                vec!["Deaths".into(), "Positives".into(), "Case fatality rate".into()],
            );
            for row in fatality_rows_by_state(acc) {
                table.push_row(
                    row.region.label(),
                    vec![Cell::Count(row.deaths), Cell::Count(row.positives), Cell::Rate(row.rate)],
                );
            }
            table
        }
        ReportKind::ComorbidityFrequencies => {
            let mut table = ReportTable::new(
                kind,
                "Comorbidity",
                ["Yes", "No", "Unspecified", "Total", "% Yes"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            );
            for c in Comorbidity::ALL {
                let [yes, no, unspecified] = acc.comorbidity_counts(c);
                let total = yes + no + unspecified;
                table.push_row(
                    c.name(),
                    vec![
                        Cell::Count(yes),
                        Cell::Count(no),
                        Cell::Count(unspecified),
                        Cell::Count(total),
                        Cell::Rate(percent_half_up(yes, total)),
                    ],
                );
            }
            table
        }
    }
}

fn deaths_summary(acc: &CohortAccumulator) -> ReportTable {
    let mut deaths = [0u64; 3];
    let mut icu_intubated = [0u64; 3];
    for (k, n) in acc.nonzero_cells() {
        if k.test == TestStatus::Positive && k.vital == VitalStatus::Deceased {
            deaths[k.sex.index()] += n;
            if k.intubation == IntubationStatus::Intubated {
                icu_intubated[k.sex.index()] += n;
            }
        }
    }
    let cols: Vec<usize> = (0..3).filter(|&s| s < 2 || deaths[s] > 0).collect();
    let mut columns: Vec<String> = cols.iter().map(|&s| SEX_LABELS[s].to_string()).collect();
    columns.push("Total".into());
    let mut table = ReportTable::new(ReportKind::DeathsSummary, "Patient type", columns);

    let total_deaths: u64 = deaths.iter().sum();
    let total_icu: u64 = icu_intubated.iter().sum();
    let counts = |v: &[u64; 3], total: u64| {
        let mut cells: Vec<Cell> = cols.iter().map(|&s| Cell::Count(v[s])).collect();
        cells.push(Cell::Count(total));
        cells
    };
    table.push_row("Deceased positives", counts(&deaths, total_deaths));
    table.push_row("Deceased positives in ICU with intubation", counts(&icu_intubated, total_icu));
    let mut shares: Vec<Cell> = cols
        .iter()
        .map(|&s| Cell::Rate(icu_intubated_death_share(icu_intubated[s], deaths[s])))
        .collect();
    shares.push(Cell::Rate(icu_intubated_death_share(total_icu, total_deaths)));
    table.push_row("% in ICU with intubation", shares);
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify_patient, SuspectType};
    use crate::profile::Profile;
    use crate::record::Comorbidities;
    use proptest::prelude::*;

    fn hundredths(r: Result<Rate, InconsistentCounts>) -> Option<u64> {
        r.unwrap().hundredths()
    }

    #[test]
    fn published_rates() {
        assert_eq!(hundredths(fatality_rate(47_472, 434_193)), Some(1093));
        assert_eq!(hundredths(fatality_rate(67, 4_555)), Some(147));
        assert_eq!(hundredths(fatality_rate(4, 28)), Some(1429));
        assert_eq!(hundredths(fatality_rate(0, 8)), Some(0));
        assert_eq!(fatality_rate(0, 0), Ok(Rate::Undefined));
        assert_eq!(fatality_rate(3, 0), Err(InconsistentCounts { deaths: 3 }));

        assert_eq!(icu_intubated_death_share(18, 1_085).hundredths(), Some(166));
        assert_eq!(icu_intubated_death_share(67, 3_486).hundredths(), Some(192));
        assert_eq!(icu_intubated_death_share(0, 0), Rate::Undefined);
    }

    #[test]
    fn half_up_at_the_boundary() {
        // 1/8 = 12.5% exactly; 1/800 = 0.125% rounds up to 0.13
        assert_eq!(hundredths(fatality_rate(1, 8)), Some(1250));
        assert_eq!(hundredths(fatality_rate(1, 800)), Some(13));
        assert_eq!(hundredths(fatality_rate(1, 3)), Some(3333));
        assert_eq!(hundredths(fatality_rate(2, 3)), Some(6667));
    }

    proptest! {
        #[test]
        fn rate_is_scale_invariant(d in 0u64..100_000, extra in 0u64..100_000, k in 1u64..1_000) {
            let p = d + extra;
            prop_assume!(p > 0);
            prop_assert_eq!(fatality_rate(k * d, k * p), fatality_rate(d, p));
        }

        #[test]
        fn rate_matches_exact_rational(d in 0u64..1_000_000, p in 1u64..1_000_000) {
            // floor(x + 1/2) where x = 10000 d / p, via remainder comparison
            let scaled = 10_000u128 * u128::from(d);
            let q = scaled / u128::from(p);
            let r = scaled % u128::from(p);
            let want = if 2 * r >= u128::from(p) { q + 1 } else { q };
            prop_assert_eq!(hundredths(fatality_rate(d, p)), Some(want as u64));
        }
    }

    fn sample_record() -> PatientRecord {
        PatientRecord {
            record_id: "x".into(),
            sex: Sex::Male,
            age: 50,
            residence: RegionKey {
                state: StateCode::new(20).unwrap(),
                municipality: Some(67),
            },
            reporting_state: StateCode::new(21).unwrap(),
            patient_type_code: "2".into(),
            icu_code: "1".into(),
            intubated_code: "1".into(),
            lab_result_code: "1".into(),
            death_date: NaiveDate::from_ymd_opt(2020, 7, 3),
            symptom_onset_date: NaiveDate::from_ymd_opt(2020, 6, 20),
            indigenous_speaker: TriState::Yes,
            case_contact: TriState::No,
            travel_history: TriState::Unspecified,
            comorbidities: Comorbidities::default(),
        }
    }

    #[test]
    fn accumulate_counts_one_cell() {
        let p = Profile::default_dge();
        let r = sample_record();
        let c = classify_patient(&r, &p.schema, &p.rules);
        assert_eq!(c.suspect_type, SuspectType::Indeterminate);
        let mut acc = CohortAccumulator::default();
        assert!(acc.accumulate(&r, &c, &CohortFilter::default()));
        assert_eq!(acc.grand_total(), 1);
        assert_eq!(acc.positive_deaths(), 1);
        let rows = fatality_rows_by_state(&acc);
        assert_eq!(rows.len(), 33);
        assert_eq!(rows[20].positives, 1);
        assert_eq!(rows[32].rate, Rate::from_hundredths(10_000));
        assert_eq!(acc.municipal().len(), 1);

        let mut by_residence = CohortAccumulator::new(RegionBasis::Residence);
        by_residence.accumulate(&r, &c, &CohortFilter::default());
        assert_eq!(fatality_rows_by_state(&by_residence)[19].positives, 1);
    }

    #[test]
    fn filters() {
        let p = Profile::default_dge();
        let mut r = sample_record();
        r.indigenous_speaker = TriState::No;
        let c = classify_patient(&r, &p.schema, &p.rules);
        let mut acc = CohortAccumulator::default();
        let indigenous = CohortFilter {
            indigenous_only: true,
            ..CohortFilter::default()
        };
        assert!(!acc.accumulate(&r, &c, &indigenous));
        assert_eq!(acc, CohortAccumulator::default());

        let states = CohortFilter {
            states: Some([StateCode::new(21).unwrap()].into()),
            ..CohortFilter::default()
        };
        assert!(states.accepts(&r, RegionBasis::Reporting));
        assert!(!states.accepts(&r, RegionBasis::Residence));

        let window = |a: (i32, u32, u32), b: (i32, u32, u32)| CohortFilter {
            date_window: Some((
                NaiveDate::from_ymd_opt(a.0, a.1, a.2).unwrap(),
                NaiveDate::from_ymd_opt(b.0, b.1, b.2).unwrap(),
            )),
            ..CohortFilter::default()
        };
        assert!(window((2020, 6, 20), (2020, 6, 20)).accepts(&r, RegionBasis::Reporting));
        assert!(!window((2020, 6, 21), (2020, 7, 1)).accepts(&r, RegionBasis::Reporting));
        r.symptom_onset_date = None;
        assert!(!window((2020, 1, 1), (2021, 1, 1)).accepts(&r, RegionBasis::Reporting));

        let muni = CohortFilter {
            municipalities: Some([sample_record().residence].into()),
            ..CohortFilter::default()
        };
        assert!(muni.accepts(&sample_record(), RegionBasis::Reporting));
    }

    #[test]
    fn empty_tables_are_zero() {
        let acc = CohortAccumulator::default();
        for kind in ReportKind::ALL {
            let t = build_table(&acc, kind);
            assert!(t.is_rectangular(), "{kind}");
            for row in &t.cells {
                for cell in row {
                    match cell {
                        Cell::Count(n) => assert_eq!(*n, 0),
                        Cell::Rate(r) => assert_eq!(*r, Rate::Undefined),
                    }
                }
            }
        }
        let t = build_table(&acc, ReportKind::FatalityByState);
        assert_eq!(t.rows.len(), 33);
        assert!(build_table_named(&acc, "nope").is_err());
    }

    #[test]
    fn cell_index_round_trips() {
        for i in [0, 1, 17, CELLS / 2, CELLS - 1] {
            assert_eq!(CellKey::from_index(i).index(), i);
        }
    }

    fn arb_accumulator() -> impl Strategy<Value = CohortAccumulator> {
        (
            proptest::collection::vec((0..CELLS, 0u64..1_000), 0..40),
            proptest::collection::vec((0..COMORBIDITY_COUNT, 0usize..3, 0u64..50), 0..10),
            proptest::collection::vec((1u8..=32, proptest::option::of(1u16..20), 0u64..30, 0u64..30), 0..10),
            0u64..10,
            0u64..10,
        )
            .prop_map(|(cells, comorb, muni, outside, rejected)| {
                let mut acc = CohortAccumulator::default();
                for (i, n) in cells {
                    acc.cells[i] += n;
                }
                for (c, v, n) in comorb {
                    acc.comorbidities[c][v] += n;
                }
                for (s, m, p, d) in muni {
                    let e = acc
                        .municipal
                        .entry(RegionKey {
                            state: StateCode::new(s).unwrap(),
                            municipality: m,
                        })
                        .or_default();
                    e.positives += p + d;
                    e.deaths += d;
                }
                acc.intubated_outside_icu = outside;
                acc.rejected_rows = rejected;
                acc
            })
    }

    proptest! {
        #[test]
        fn merge_is_a_commutative_monoid(a in arb_accumulator(), b in arb_accumulator(), c in arb_accumulator()) {
            let empty = CohortAccumulator::default();
            prop_assert_eq!(&a.clone().merge(&empty), &a);
            prop_assert_eq!(&empty.clone().merge(&a), &a);
            prop_assert_eq!(a.clone().merge(&b), b.clone().merge(&a));
            prop_assert_eq!(a.clone().merge(&b).merge(&c), a.clone().merge(&b.clone().merge(&c)));
        }

        #[test]
        fn tables_have_consistent_margins(a in arb_accumulator()) {
            for kind in [ReportKind::ResultBySex, ReportKind::CareByResult, ReportKind::CareBySex] {
                let t = build_table(&a, kind);
                let last = t.columns.len() - 1;
                for row in &t.cells {
                    let sum: u64 = row[..last].iter().map(|c| c.count().unwrap()).sum();
                    prop_assert_eq!(sum, row[last].count().unwrap());
                }
                let total_row = t.cells.last().unwrap();
                for col in 0..t.columns.len() {
                    let sum: u64 = t.cells[..t.cells.len() - 1].iter().map(|r| r[col].count().unwrap()).sum();
                    prop_assert_eq!(sum, total_row[col].count().unwrap());
                }
                prop_assert_eq!(total_row[last].count().unwrap(), a.grand_total());
            }
        }

        #[test]
        fn snapshot_round_trips(a in arb_accumulator()) {
            let json = serde_json::to_string(&a.to_snapshot()).unwrap();
            let back: Snapshot = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(CohortAccumulator::from_snapshot(&back).unwrap(), a);
        }
    }
}
