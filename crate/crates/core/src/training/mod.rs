//! Joint rate-distortion training of all routes: the summed loss, the
//! initial per-route training strategy and joint-routes optimization.

pub mod config;
pub mod data;
pub mod jro;
pub mod loss;
pub mod schedule;
pub mod train;

pub use config::{parse_size, StopRule, TrainConfig, DEFAULT_KAPPA, DEFAULT_LAMBDA_TOP};
pub use data::{pair_reference, Batch, TrainingSet};
pub use jro::{jro, post_train, write_trajectory, JroOutcome, Phase, TrajectoryRow};
pub use loss::{evaluate_routes, rd_loss, slope, RDPoint, RdLoss};
pub use schedule::{decay_lambdas, LambdaSchedule};
pub use train::{train_initial, InitialOutcome, Trainer};
