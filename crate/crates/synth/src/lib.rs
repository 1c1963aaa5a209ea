//! Seeded synthetic surveillance datasets and a brute-force reference
//! implementation of the report tables.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with the generator's
//! seed, so output is identical across platforms for a given crate version.

pub mod fixture;
pub mod generate;
pub mod oracle;
pub mod plan;
pub mod spec;

pub use generate::{generate, write_dataset, Generated, InjectedFault};
pub use oracle::{oracle_counts, oracle_counts_named, OracleFilter};
pub use plan::{solve, InconsistentSpec, MarginalPlan};
pub use spec::GeneratorSpec;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    InconsistentSpec(#[from] InconsistentSpec),
    #[error("bad weights: {0}")]
    Weights(String),
    #[error("cannot inject faults: {0}")]
    Faults(String),
    #[error("schema cannot express generated values: {0}")]
    Schema(String),
    #[error("spec file: {0}")]
    SpecToml(#[from] toml::de::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing dataset: {0}")]
    Write(#[source] std::io::Error),
}

impl SynthError {
    pub(crate) fn write(e: std::io::Error) -> Self {
        SynthError::Write(e)
    }
}
