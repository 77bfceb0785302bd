//! Preference-based reinforcement learning on toy manipulation tasks.
//!
//! Trajectory sketches feed pairwise labelers, a Bradley-Terry reward model is
//! trained with an optional agent-preference regularizer, and a soft
//! actor-critic policy is optimized on the learned reward.

pub mod autodiff;
pub mod envs;
pub mod harness;
pub mod error;
pub mod labeler;
pub mod model;
pub mod nn;
pub mod preference;
pub mod reward;
pub mod sac;
pub mod scalar;
pub mod sketch;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = autodiff::Matrix<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type Adam = nn::Adam<f64>;
pub type ParamTensor = nn::ParamTensor<f64>;
pub type Matrix32 = autodiff::Matrix<f32>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Mlp32 = nn::Mlp<f32>;
