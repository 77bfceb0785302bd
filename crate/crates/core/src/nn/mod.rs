//! Multilayer perceptrons, Adam, and parameter checkpoints.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_mlp, save_mlp, LayerRecord, MlpCheckpoint, MLP_FORMAT};
pub use mlp::{Activation, Mlp, MlpVars, OutputActivation, ParamTensor};
