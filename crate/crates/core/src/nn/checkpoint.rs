//! JSON parameter checkpoints.
//!
//! ```json
//! {
//!   "format": "prefrl-mlp/1",
//!   "layer_sizes": [8, 64, 1],
//!   "activation": "relu",
//!   "output_activation": "tanh",
//!   "layers": [ { "weights": [...], "bias": [...] }, ... ]
//! }
//! ```
//!
//! `weights` of layer `i` is the `layer_sizes[i] × layer_sizes[i+1]` block in
//! row-major order (row = input unit). Values are written with shortest
//! round-trip formatting, so save → load is exact for `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, OutputActivation};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MLP_FORMAT: &str = "prefrl-mlp/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
    pub layers: Vec<LayerRecord>,
}

impl MlpCheckpoint {
    pub fn from_mlp<T: Scalar>(net: &Mlp<T>) -> Self {
        let layers = (0..net.num_layers())
            .map(|l| LayerRecord {
                weights: net.weight(l).values.iter().map(|v| v.to_f64_lossy()).collect(),
                bias: net.bias(l).values.iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect();
        Self {
            format: MLP_FORMAT.to_string(),
            layer_sizes: net.layer_sizes().to_vec(),
            activation: net.activation(),
            output_activation: net.output_activation(),
            layers,
        }
    }

    pub fn to_mlp<T: Scalar>(&self) -> Result<Mlp<T>> {
        if self.format != MLP_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", self.format)));
        }
        let mut net = Mlp::zeros(&self.layer_sizes, self.activation, self.output_activation)?;
        if self.layers.len() != net.num_layers() {
            return Err(Error::Checkpoint(format!(
                "{} layer records for {} layers",
                self.layers.len(),
                net.num_layers()
            )));
        }
        for (l, rec) in self.layers.iter().enumerate() {
            let w = net.weight_mut(l);
            if rec.weights.len() != w.len() {
                return Err(Error::Checkpoint(format!("layer {l} weight count")));
            }
            w.values = rec.weights.iter().map(|&x| T::lit(x)).collect();
            let b = net.bias_mut(l);
            if rec.bias.len() != b.len() {
                return Err(Error::Checkpoint(format!("layer {l} bias count")));
            }
            b.values = rec.bias.iter().map(|&x| T::lit(x)).collect();
        }
        Ok(net)
    }
}

pub fn save_mlp<T: Scalar>(net: &Mlp<T>, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(&MlpCheckpoint::from_mlp(net))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_mlp<T: Scalar>(path: impl AsRef<Path>) -> Result<Mlp<T>> {
    let text = fs::read_to_string(path)?;
    let ckpt: MlpCheckpoint = serde_json::from_str(&text)?;
    ckpt.to_mlp()
}
