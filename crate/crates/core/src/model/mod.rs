//! The SwG-former network, ACCDOA targets, training and checkpoints.

mod accdoa;
mod checkpoint;
mod config;
mod net;
mod train;

pub use accdoa::{accdoa_decode, accdoa_encode, accdoa_loss, detections_to_annotations, Detection, DEFAULT_THRESHOLD};
pub use checkpoint::{load_checkpoint, save_checkpoint, CONFIG_FILE, MANIFEST_FILE, PARAMS_FILE};
pub use config::{parse_window_group, window_group, ModelConfig, RunConfig, TrainConfig, WINDOW_GROUPS};
pub use net::SwgFormer;
pub use train::{evaluate_dataset, predict, predict_dataset, train, Dataset, EpochLog, Sample, TrainOutcome, LOG_HEADER};
