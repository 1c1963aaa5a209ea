//! The `cohort` command line: `validate`, `report` and `synth`.
//!
//! Exit codes: 0 when everything is clean, 1 when the data has quality
//! findings (rejected rows), 2 on configuration or I/O failure. Progress
//! goes to stderr; summaries and reports go to stdout or files.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use cohort_core::aggregate::{build_table, fatality_rate, fatality_rows_by_state, RegionBasis};
use cohort_core::ingest::{validate_dataset, Encoding, RowErrorKind, ValidateOptions, ValidationReport};
use cohort_core::pipeline::{run_path, PipelineOptions};
use cohort_core::profile::Profile;
use cohort_core::report::{emit_choropleth, emit_csv, emit_json, OutputSet, RegionRate};
use cohort_synth::fixture::indigenous_cohort_spec;
use cohort_synth::{write_dataset, GeneratorSpec};

use crate::config::{
    build_filter, parse_basis, parse_encoding, parse_kinds, ConfigError, FileConfig, RunConfig, DEFAULT_JOIN_KEY,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cohort", version, about = "Cohort tables and case fatality rates from surveillance line lists")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every row of a dataset and print a JSON validation report.
    Validate(ValidateArgs),
    /// Build report tables (CSV + JSON) and, with --boundaries, a choropleth GeoJSON.
    Report(ReportArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML file with defaults for any of these flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Schema profile (TOML). Defaults to the bundled profile.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// auto, utf-8 or latin-1.
    #[arg(long)]
    pub encoding: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Also write validation.json into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum number of sample errors kept in the report.
    #[arg(long)]
    pub error_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated report kinds, or `all`.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<String>,
    /// Keep only indigenous-language speakers.
    #[arg(long)]
    pub indigenous_only: bool,
    /// Comma-separated state codes to keep.
    #[arg(long, value_delimiter = ',')]
    pub states: Vec<u8>,
    /// First symptom-onset date to keep (YYYY-MM-DD).
    #[arg(long)]
    pub onset_from: Option<NaiveDate>,
    /// Last symptom-onset date to keep (YYYY-MM-DD).
    #[arg(long)]
    pub onset_to: Option<NaiveDate>,
    /// GeoJSON FeatureCollection of state boundaries.
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    /// Feature property holding the numeric state code.
    #[arg(long)]
    pub join_key: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..=256))]
    pub workers: Option<u16>,
    /// reporting (state of the medical unit) or residence.
    #[arg(long)]
    pub region_basis: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rows: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// File name inside the output directory.
    #[arg(long)]
    pub file_name: Option<String>,
    /// Generator spec (TOML): weights, planted marginals, faults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Built-in spec; `indigenous-cohort` plants the published cohort tables.
    #[arg(long)]
    pub preset: Option<String>,
    /// Inject exact faults, e.g. `MalformedDate=7`. Repeatable.
    #[arg(long = "fault")]
    pub faults: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match cli.command {
        Command::Validate(a) => cmd_validate_args(&a, stdout, stderr),
        Command::Report(a) => cmd_report_args(&a, stdout, stderr),
        Command::Synth(a) => cmd_synth_args(&a, stdout, stderr),
    }
}

fn fail(stderr: &mut dyn Write, message: impl std::fmt::Display) -> i32 {
    let _ = writeln!(stderr, "error: {message}");
    EXIT_FAILURE
}

fn file_config(common: &CommonArgs) -> Result<FileConfig, ConfigError> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn load_profile(schema: Option<&Path>) -> Result<Profile, String> {
    match schema {
        Some(path) => Profile::load(path).map_err(|e| e.to_string()),
        None => Ok(Profile::default_dge()),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::Invalid(format!("--{flag} is required (flag or config file)")))
}

// ---- validate ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidateConfig {
    pub input: PathBuf,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub encoding: Encoding,
    pub error_cap: usize,
}

fn validate_config(a: &ValidateArgs) -> Result<ValidateConfig, ConfigError> {
    let file = file_config(&a.common)?;
    Ok(ValidateConfig {
        input: required(a.input.clone().or(file.input), "input")?,
        schema: a.common.schema.clone().or(file.schema),
        out: a.out.clone().or(file.out),
        encoding: parse_encoding(a.common.encoding.as_deref().or(file.encoding.as_deref()).unwrap_or("auto"))?,
        error_cap: a.error_cap.or(file.error_cap).unwrap_or(100),
    })
}

fn cmd_validate_args(a: &ValidateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match validate_config(a) {
        Ok(config) => cmd_validate(&config, stdout, stderr).0,
        Err(e) => fail(stderr, e),
    }
}

/// Validates the input, prints the report as JSON to stdout and, with an
/// output directory, writes it to `validation.json` there too.
pub fn cmd_validate(
    config: &ValidateConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> (i32, Option<ValidationReport>) {
    let profile = match load_profile(config.schema.as_deref()) {
        Ok(p) => p,
        Err(e) => return (fail(stderr, e), None),
    };
    let mut outputs = match &config.out {
        Some(dir) => match OutputSet::new(dir) {
            Ok(o) => Some(o),
            Err(e) => return (fail(stderr, format!("output directory {}: {e}", dir.display())), None),
        },
        None => None,
    };
    let _ = writeln!(stderr, "validating {}", config.input.display());
    let options = ValidateOptions {
        encoding: config.encoding,
        error_cap: config.error_cap,
        track_duplicates: true,
    };
    let report = match validate_dataset(&config.input, &profile.schema, options) {
        Ok(r) => r,
        Err(e) => return (fail(stderr, e), None),
    };
    let json = report.to_json();
    if let Some(out) = outputs.as_mut() {
        if let Err(e) = out.write("validation.json", format!("{json}\n").as_bytes()) {
            return (fail(stderr, e), None);
        }
    }
    if let Some(out) = outputs {
        out.commit();
    }
    let _ = writeln!(stdout, "{json}");
    let _ = writeln!(
        stderr,
        "{} rows: {} accepted, {} rejected",
        report.rows_total, report.rows_accepted, report.rows_rejected
    );
    let code = if report.rows_rejected == 0 { EXIT_OK } else { EXIT_FINDINGS };
    (code, Some(report))
}

// ---- report ----

fn run_config(a: &ReportArgs) -> Result<RunConfig, ConfigError> {
    let file = file_config(&a.common)?;
    let kinds = if a.kinds.is_empty() {
        parse_kinds(file.kinds.as_deref().unwrap_or(&[]))?
    } else {
        parse_kinds(&a.kinds)?
    };
    let states = if a.states.is_empty() { file.states.clone() } else { Some(a.states.clone()) };
    let filter = build_filter(
        a.indigenous_only || file.indigenous_only.unwrap_or(false),
        states.as_deref(),
        a.onset_from.or(file.onset_from),
        a.onset_to.or(file.onset_to),
    )?;
    let workers = match a.workers {
        Some(w) => usize::from(w),
        None => file.workers.unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get().min(8)).unwrap_or(1)
        }),
    };
    if workers == 0 {
        return Err(ConfigError::Invalid("workers must be at least 1".into()));
    }
    Ok(RunConfig {
        input: required(a.input.clone().or(file.input), "input")?,
        schema: a.common.schema.clone().or(file.schema),
        out: required(a.out.clone().or(file.out), "out")?,
        kinds,
        filter,
        boundaries: a.boundaries.clone().or(file.boundaries),
        join_key: a
            .join_key
            .clone()
            .or(file.join_key)
            .unwrap_or_else(|| DEFAULT_JOIN_KEY.to_string()),
        workers,
        basis: match a.region_basis.as_deref().or(file.region_basis.as_deref()) {
            Some(b) => parse_basis(b)?,
            None => RegionBasis::default(),
        },
        encoding: parse_encoding(a.common.encoding.as_deref().or(file.encoding.as_deref()).unwrap_or("auto"))?,
        error_cap: file.error_cap.unwrap_or(100),
    })
}

fn cmd_report_args(a: &ReportArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match run_config(a) {
        Ok(config) => cmd_report(&config, stdout, stderr),
        Err(e) => fail(stderr, e),
    }
}

/// Ingest → classify → aggregate → emit. On failure nothing is left behind
/// in the output directory.
pub fn cmd_report(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let profile = match load_profile(config.schema.as_deref()) {
        Ok(p) => p,
        Err(e) => return fail(stderr, e),
    };
    let boundaries = match &config.boundaries {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(e) => return fail(stderr, format!("reading {}: {e}", path.display())),
        },
        None => None,
    };
    let mut outputs = match OutputSet::new(&config.out) {
        Ok(o) => o,
        Err(e) => return fail(stderr, format!("output directory {}: {e}", config.out.display())),
    };

    let _ = writeln!(
        stderr,
        "reading {} with {} worker(s)",
        config.input.display(),
        config.workers
    );
    let options = PipelineOptions {
        workers: config.workers,
        filter: config.filter.clone(),
        basis: config.basis,
        encoding: config.encoding,
        error_cap: config.error_cap,
        ..PipelineOptions::default()
    };
    let result = match run_path(&config.input, &profile, &options) {
        Ok(r) => r,
        Err(e) => return fail(stderr, e),
    };
    let acc = &result.accumulator;

    for kind in &config.kinds {
        let table = build_table(acc, *kind);
        for (ext, text) in [("csv", emit_csv(&table)), ("json", emit_json(&table))] {
            if let Err(e) = outputs.write(&format!("{}.{ext}", kind.name()), text.as_bytes()) {
                return fail(stderr, e);
            }
        }
    }
    let mut join_misses = Vec::new();
    if let Some(text) = &boundaries {
        let rates = RegionRate::from_state_rows(&fatality_rows_by_state(acc));
        let map = match emit_choropleth(&rates, text, &config.join_key) {
            Ok(m) => m,
            Err(e) => return fail(stderr, e),
        };
        if let Err(e) = outputs.write("fatality_by_state.geojson", map.geojson.as_bytes()) {
            return fail(stderr, e);
        }
        join_misses = map.join_misses;
    }
    let validation_json = format!("{}\n", result.validation.to_json());
    if let Err(e) = outputs.write("validation.json", validation_json.as_bytes()) {
        return fail(stderr, e);
    }
    let written = outputs.commit();

    for code in &join_misses {
        let _ = writeln!(stderr, "warning: state {code} has no boundary feature");
    }
    let v = &result.validation;
    let positives = acc.test_total(cohort_core::classify::TestStatus::Positive);
    let deaths = acc.positive_deaths();
    let rate = fatality_rate(deaths, positives).map(|r| r.to_string()).unwrap_or_else(|e| e.to_string());
    let _ = writeln!(stdout, "rows read        {}", v.rows_total);
    let _ = writeln!(stdout, "rows rejected    {}", v.rows_rejected);
    let _ = writeln!(stdout, "rows in cohort   {}", acc.grand_total());
    let _ = writeln!(stdout, "positives        {positives}");
    let _ = writeln!(stdout, "positive deaths  {deaths}");
    let _ = writeln!(stdout, "case fatality %  {rate}");
    if acc.intubated_outside_icu() > 0 {
        let _ = writeln!(stdout, "intubated outside ICU (not counted as intubated)  {}", acc.intubated_outside_icu());
    }
    let _ = writeln!(stdout, "files written    {}", written.len());
    for path in &written {
        let _ = writeln!(stdout, "  {}", path.display());
    }
    if v.rows_rejected > 0 {
        EXIT_FINDINGS
    } else {
        EXIT_OK
    }
}

// ---- synth ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub spec: GeneratorSpec,
    pub schema: Option<PathBuf>,
    pub out: PathBuf,
    pub file_name: String,
}

fn parse_fault(text: &str) -> Result<(RowErrorKind, u64), ConfigError> {
    let (kind, n) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Invalid(format!("fault {text:?} is not KIND=COUNT")))?;
    let kind = RowErrorKind::ALL
        .into_iter()
        .find(|k| format!("{k:?}") == kind.trim())
        .ok_or_else(|| ConfigError::Invalid(format!("unknown fault kind {kind:?}")))?;
    let n = n
        .trim()
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("fault count {n:?} is not a number")))?;
    Ok((kind, n))
}

fn synth_config(a: &SynthArgs) -> Result<SynthConfig, ConfigError> {
    let file = file_config(&a.common)?;
    let preset = a.preset.clone().or(file.preset);
    let spec_path = a.spec.clone().or(file.spec);
    let seed = a.seed.or(file.seed);
    let mut spec = match (preset.as_deref(), spec_path) {
        (Some(_), Some(_)) => return Err(ConfigError::Invalid("use either --preset or --spec".into())),
        (Some("indigenous-cohort"), None) => indigenous_cohort_spec(seed.unwrap_or(1)),
        (Some(other), None) => return Err(ConfigError::Invalid(format!("unknown preset {other:?}"))),
        (None, Some(path)) => GeneratorSpec::load(&path).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        (None, None) => GeneratorSpec::new(
            required(seed, "seed")?,
            required(a.rows.or(file.rows), "rows")?,
        ),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(rows) = a.rows.or(file.rows) {
        spec.rows = rows;
    }
    for f in &a.faults {
        let (kind, n) = parse_fault(f)?;
        spec.faults.insert(kind, n);
    }
    Ok(SynthConfig {
        spec,
        schema: a.common.schema.clone().or(file.schema),
        out: required(a.out.clone().or(file.out), "out")?,
        file_name: a
            .file_name
            .clone()
            .or(file.file_name)
            .unwrap_or_else(|| "synthetic.csv".to_string()),
    })
}

fn cmd_synth_args(a: &SynthArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match synth_config(a) {
        Ok(config) => cmd_synth(&config, stdout, stderr),
        Err(e) => fail(stderr, e),
    }
}

/// Writes the dataset into the output directory atomically.
pub fn cmd_synth(config: &SynthConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if config.file_name.contains(['/', '\\']) || config.file_name.is_empty() || config.file_name == ".." {
        return fail(stderr, format!("file name {:?} must be a plain name", config.file_name));
    }
    let profile = match load_profile(config.schema.as_deref()) {
        Ok(p) => p,
        Err(e) => return fail(stderr, e),
    };
    if let Err(e) = std::fs::create_dir_all(&config.out) {
        return fail(stderr, format!("output directory {}: {e}", config.out.display()));
    }
    let mut tmp = match tempfile::NamedTempFile::new_in(&config.out) {
        Ok(t) => t,
        Err(e) => return fail(stderr, format!("output directory {}: {e}", config.out.display())),
    };
    let _ = writeln!(stderr, "generating {} rows (seed {})", config.spec.rows, config.spec.seed);
    let mut accepted = 0u64;
    let faults = match write_dataset(&config.spec, &profile.schema, tmp.as_file_mut(), |_| accepted += 1) {
        Ok(f) => f,
        Err(e) => return fail(stderr, e),
    };
    let target = config.out.join(&config.file_name);
    if let Err(e) = tmp.persist(&target) {
        return fail(stderr, e.error);
    }
    let _ = writeln!(stdout, "wrote {}", target.display());
    let _ = writeln!(stdout, "rows             {}", config.spec.rows);
    let _ = writeln!(stdout, "injected faults  {}", faults.len());
    let _ = writeln!(stdout, "valid rows       {accepted}");
    EXIT_OK
}
