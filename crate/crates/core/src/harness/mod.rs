//! Dataset ingestion, flow caching, experiment orchestration and the
//! synthetic flow benchmark.

mod bench;
mod cache;
mod config;
mod flows;
mod ingest;
mod run;

pub use bench::{bench_markdown, flow_bench, write_bench_csv, BenchRow, CONTROL_ROW, INTERIOR_BAND, SEAM_BAND};
pub use cache::FlowCache;
pub use config::{AugmentationSpec, ExperimentConfig, ExternalSpec, SplitConfig, Tim10Flows};
pub use flows::{compute_flows, SequenceFlows};
pub use ingest::{ingest_dataset, IngestIssue, IngestReport};
pub use run::{dataset_digest, extract_features, run_experiment, sha256_hex, CellResult, RunReport, MANIFEST_VERSION};

use crate::error::{Error, Result};

/// Runs `f` on a pool of `jobs` worker threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::invalid("--jobs must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(pool.install(f))
}
