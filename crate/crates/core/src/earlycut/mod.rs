//! Learning-time base selection refined by Early Cutting: samples learned
//! early but later predicted against their label with high confidence and a
//! small input gradient are removed from the confident subset.

mod config;
mod mees;
mod metrics;
mod pipeline;
mod select;

pub use config::{CutConfig, PercentilePopulation};
pub use mees::{identify_mees, rank_count, MeeSelection};
pub use metrics::{compute_metrics, SelectionMetrics};
pub use pipeline::{
    round_seed, run_pipeline, run_round, select_from_trajectory, select_with_metrics, train_fresh,
    write_candidate_csv, PipelineOutcome, PipelineReport, RoundOutcome, RoundReport, Selection,
    SelectionState,
};
pub use select::{base_select, candidate_subset, pick_early_stop_epoch, retention_per_round};
