//! Separation and localisation metrics, significance tests and dataset
//! reports.

mod doa;
mod metrics;
mod report;
mod stats;

pub use doa::{
    doa_error, doa_estimate, estimate_itd, invert_woodworth, DoaTrajectoryEstimate, DOA_FRAME, DOA_HOP,
    ENERGY_GATE_DB,
};
pub use metrics::{
    best_permutation, binaural_snr_sum, cap_sentinel, pit_align, snr, snr_slices, snri, Permutation, IDENTITY,
    SNR_EPS, SNR_SENTINEL_CAP, SWAPPED,
};
pub use report::{
    evaluate_dataset, list_scenes, read_metrics_csv, summarize, write_metrics_csv, write_report, write_summary, Contrast,
    DoaEstimator, Estimates, EvalReport, GccDoa, GroupStat, MetricsRecord, Summary,
};
pub use stats::{fdr_adjust, mann_whitney_u, StatTestResult};
