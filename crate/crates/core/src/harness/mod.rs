//! Experiment plans, a content-addressed result store and the pipeline that
//! generates instances, runs the engines, scores, triangulates and reports.

mod pipeline;
mod plan;
mod report;
mod store;

pub use pipeline::{
    failure_of, load_correlations, run_plan, score_run, scores_table, triangulation_rows, FailureRecord, InstanceSlot,
    Layout, Pipeline, RunSlot, RunSummary, Score, Stage, TimingRecord, TriangulatedRun, SCORES_HEADER, SCORES_TABLE,
    TRIANGULATION_TABLE,
};
pub use plan::{
    derive_seed, CellSpec, EngineConfig, ExperimentPlan, Geometry, QuenchSettings, MIN_TIMING_REPEATS, PLAN_VERSION,
};
pub use report::{report, Figure};
pub use store::{content_key, ArtifactKind, Store};
