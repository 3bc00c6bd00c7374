//! Alignment quality against ground truth, downstream regression error, and
//! multi-variant comparison reports.

mod alignment;
mod compare;
mod downstream;

pub use alignment::{alignment_error, deviations, path_to_correspondence, pooled_alignment_error, summarize, AlignmentError};
pub use compare::{
    compare_variants, evaluate_dataset, evaluate_seed, median, prepare_features, rank, ranking_csv, report_csv, run_variant, AlignmentReport,
    Comparison, EvalSettings, RankEntry, Variant, REPORT_HEADER,
};
pub use downstream::{path_frame_pairs, regression_mse, truth_frame_pairs, DownstreamResult, FramePairs, RegressorConfig};
