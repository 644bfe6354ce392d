//! Configuration, pipeline stages and run manifest behind the `flowcast`
//! command line.

mod config;
mod manifest;
mod pipeline;

pub use config::{
    DataConfig, ModelOverride, ModelPlan, RunConfig, SplitConfig, SynthConfig, TrainDefaults, WindowConfig,
};
pub use manifest::{Diagnostics, RunManifest, StageTiming};
pub use pipeline::{
    cmd_evaluate, cmd_predict, cmd_synth, cmd_train, cmd_train_all, forecast, load_archive, predict_model,
    provenance, train_model, Dataset, PredictRecord, TrainRecord, TRAIN_LOG_HEADER, VERSION,
};
