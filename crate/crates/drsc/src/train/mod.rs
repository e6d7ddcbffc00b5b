//! Optimization loop: Adam, checkpointing, and the epoch driver that plays
//! the two-player objective (discriminator steps maximize, everything else
//! minimizes).

pub mod checkpoint;
pub mod optimizer;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use optimizer::Adam;
pub use trainer::{
    fit, load_data, resolve_model_config, train_step, AnyModel, FitReport, TrainState,
};
