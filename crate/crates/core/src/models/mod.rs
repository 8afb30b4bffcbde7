//! The three classifier families, their parameter budgets and checkpoints.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{build_model, state_checksum, ForwardCache, Model, Param, Tensor};
pub use spec::{
    count_parameters, Family, ModelSpec, DEFAULT_DEEP_MLP_HIDDEN, DEFAULT_DROPOUT, DEFAULT_MLP_HIDDEN,
    DEFAULT_RES_BLOCKS, DEFAULT_RES_WIDTH,
};
