//! DTW, its exhaustive oracle, and the alternating alignment fitters.

mod distance;
mod dtw;
mod fit;

pub use distance::{pairwise_distance, Metric};
pub use dtw::{
    brute_force_dtw, dtw, dtw_with_costs, optimality_sweep, path_cost, DtwResult, OptimalityMismatch, OptimalityReport,
    BRUTE_FORCE_MAX,
};
pub use fit::{
    ctw_fit, linear_cca, path_change_fraction, pooled_frames, transience_fit, IterationRecord, LinearCca, TrainConfig,
    TrainRun,
};
