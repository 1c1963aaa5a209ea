//! Ingestion, classification and stratified aggregation of national
//! COVID-19 case line lists.

pub mod aggregate;
pub mod classify;
pub mod ingest;
pub mod profile;
pub mod record;
pub mod schema;
pub mod table;
pub mod pipeline;
pub mod report;
