//! Two-stream end-to-end visual speech recognition.
//!
//! The crate implements the complete model from scratch: fully connected
//! encoders with a linear bottleneck, appended Δ/ΔΔ regression features,
//! per-stream BLSTMs, a fusion BLSTM and a per-frame softmax whose
//! majority vote labels an utterance. Encoders can be pretrained
//! layer-wise with Gaussian RBMs, streams are trained end-to-end with Adam,
//! then fused and fine-tuned.
//!
//! Everything runs on the CPU with exact analytic gradients; every network
//! is generic over [`Real`] so gradient checks run in `f64` while training
//! runs in `f32`.
//!
//! Module map:
//!
//! - [`numerics`]: tensors, the seeded RNG, Glorot init, Adam, global-norm clipping
//! - [`layers`]: FC, Δ/ΔΔ, LSTM/BLSTM and softmax cross-entropy
//! - [`rbm`]: Gaussian RBMs and greedy CD-1 pretraining
//! - [`model`]: stream and fusion networks, majority vote, checkpoints
//! - [`data`]: utterance containers, manifests, preprocessing, protocols, synthetic data
//! - [`training`]: batching with masks, the training loop, early stopping
//! - [`eval`]: accuracy, per-subject accuracy, confusion, run aggregation, reports
//! - [`gradcheck`]: finite-difference checks of every layer and composed graph
//! - [`cli`]: the `vsr` command line

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod numerics;
pub mod rbm;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Real, Rng, Tensor};
