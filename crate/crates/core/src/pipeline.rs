//! Ingest → classify → accumulate, fanned out over a fixed worker pool.
//!
//! The reader runs on the calling thread and hands row batches to workers
//! over a bounded channel, so at most `2 * workers` batches are in flight.
//! Each worker owns an accumulator; they are merged once at the end.

use std::io::Read;
use std::path::Path;

use crossbeam_channel::bounded;

use crate::aggregate::{CohortAccumulator, CohortFilter, RegionBasis};
use crate::classify::classify_patient;
use crate::ingest::{open_dataset, DatasetReader, Encoding, IngestError, RowOutcome, ValidationReport, ValidationTally};
use crate::profile::Profile;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub workers: usize,
    pub batch_rows: usize,
    pub filter: CohortFilter,
    pub basis: RegionBasis,
    pub encoding: Encoding,
    pub error_cap: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            workers: 1,
            batch_rows: 1024,
            filter: CohortFilter::default(),
            basis: RegionBasis::default(),
            encoding: Encoding::Auto,
            error_cap: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub accumulator: CohortAccumulator,
    /// Duplicate ids are not tracked here; see `validate_dataset`.
    pub validation: ValidationReport,
    /// Largest accumulator footprint seen across workers, in bytes.
    pub peak_accumulator_bytes: usize,
}

pub fn run_path(path: &Path, profile: &Profile, options: &PipelineOptions) -> Result<PipelineOutput, IngestError> {
    let reader = open_dataset(path, &profile.schema, options.encoding)?;
    run_reader(reader, profile, options)
}

pub fn run_reader<R: Read>(
    mut reader: DatasetReader<'_, R>,
    profile: &Profile,
    options: &PipelineOptions,
) -> Result<PipelineOutput, IngestError> {
    assert!(options.workers >= 1, "worker count must be at least 1");
    let batch_rows = options.batch_rows.max(1);
    let (batch_tx, batch_rx) = bounded::<Vec<RowOutcome>>(2 * options.workers);
    let (spare_tx, spare_rx) = bounded::<Vec<RowOutcome>>(3 * options.workers);
    let mut tally = ValidationTally::new(options.error_cap, false);

    let (read_result, accumulators) = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..options.workers)
            .map(|_| {
                let batch_rx = batch_rx.clone();
                let spare_tx = spare_tx.clone();
                scope.spawn(move || {
                    let mut acc = CohortAccumulator::new(options.basis);
                    let mut peak = 0;
                    for mut batch in batch_rx {
                        for outcome in batch.drain(..) {
                            if let RowOutcome::Record(record) = outcome {
                                let c = classify_patient(&record, &profile.schema, &profile.rules);
                                debug_assert!(c.is_gated());
                                acc.accumulate(&record, &c, &options.filter);
                            }
                        }
                        peak = peak.max(acc.footprint_bytes());
                        // hand the allocation back to the reader; drop it if the pool is full
                        let _ = spare_tx.try_send(batch);
                    }
                    (acc, peak)
                })
            })
            .collect();
        drop(batch_rx);
        drop(spare_tx);

        let read_result = (|| {
            loop {
                let mut batch = spare_rx.try_recv().unwrap_or_else(|_| Vec::with_capacity(batch_rows));
                let more = reader.next_batch(&mut batch, batch_rows)?;
                for outcome in &batch {
                    tally.observe(outcome);
                }
                if !batch.is_empty() && batch_tx.send(batch).is_err() {
                    break;
                }
                if !more {
                    break;
                }
            }
            Ok::<(), IngestError>(())
        })();
        drop(batch_tx);

        let accumulators: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect();
        (read_result, accumulators)
    });
    read_result?;

    let mut merged = CohortAccumulator::new(options.basis);
    let mut peak = merged.footprint_bytes();
    for (acc, worker_peak) in &accumulators {
        merged.merge_from(acc);
        peak = peak.max(*worker_peak);
    }
    let validation = tally.finish(reader.age_capped(), reader.encoding());
    merged.note_rejected(validation.rows_rejected);
    peak = peak.max(merged.footprint_bytes());
    Ok(PipelineOutput {
        accumulator: merged,
        validation,
        peak_accumulator_bytes: peak,
    })
}
