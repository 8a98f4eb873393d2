//! Stream synchronization, the traditional and depth-gated pipelines, and
//! the timing benchmark.

mod bench;
mod manifest;
mod run;

pub use bench::{bench, speedup_pct, summarize, BenchReport, MethodSummary};
pub use manifest::{
    meta_path, sync_plan, sync_streams, ManifestRow, SequenceMeta, Stream, StreamManifest, SyncResult, SyncStats,
    SyncedTriple,
};
pub use run::{
    detect_sequence_dhp, run_proposed, run_traditional, sweep_csv, threshold_sweep, FrameResult, FrameTimings,
    RunConfig, RunCounters, RunResult,
};
