//! Training and evaluation orchestration: run configuration, augmentation
//! scheduling, the training loop, reports and the gradient-check suite.

mod augment;
mod config;
pub mod gradcheck;
mod report;
mod run;
mod schedule;
mod train;

pub use augment::{AugCounters, Augmenter};
pub use config::{AugConfig, PlateauMonitor, RunConfig, Scheduler, Selection, OUTPUT_ROOT_ENV};
pub use report::{evaluate_net, predict_stage_labels, Aggregate, RunReport, SequenceRecord};
pub use run::{evaluate_checkpoint, output_dir, run_experiment, CheckpointMeta};
pub use schedule::PlateauScheduler;
pub use train::{eval_loss, input_tensor, predict, prepare, train_model, EpochRecord, NamedSequence, TrainOutcome};
