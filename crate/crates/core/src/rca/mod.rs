//! Rate control: per-route rate estimation, sliding-window allocation and
//! route selection.

pub mod controller;
pub mod dataset;
pub mod estimator;
pub mod motion;

pub use controller::{allocate_bits, select_route, update_state, ControllerState, RateEstimate, DEFAULT_WINDOW};
pub use dataset::collect_samples;
pub use estimator::{
    estimate_rates, estimator_features, relative_errors, train_estimator, true_rates, write_samples_csv, EstimatorInput, EstimatorModel, EstimatorTrainConfig,
    LearnedEstimator, OracleEstimator, RateEstimator, RateSample,
};
pub use motion::{block_motion, MotionField, BLOCK_SIZE, SEARCH_RANGE};
