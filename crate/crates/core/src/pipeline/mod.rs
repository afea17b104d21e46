//! Batch orchestration: manifests, the evaluation loop, caching and reports.

mod config;
pub mod fixtures;
mod manifest;
pub mod report;
mod run;

pub use config::{LightingSpec, ProxyShape, RenderedRoi, RunConfig};
pub use fixtures::{generate_fixtures, FixtureParams};
pub use manifest::{
    load_manifest, validate_records, write_manifest_csv, Manifest, ManifestError, ManifestRecord, ManifestRow,
};
pub use report::{report, write_report, Factor, ReportBundle, StatsReport};
pub use run::{read_records, records_csv, run, CellStatus, LedgerEntry, LedgerTotals, RunLedger, RunOutput};
