//! Differentiable building blocks with hand-derived gradients.
//!
//! Every layer exposes a forward pass returning whatever the backward pass
//! needs, and a backward pass that *accumulates* parameter gradients into a
//! same-shaped "gradient" copy of the layer. Accumulation lets a batch of
//! variable-length utterances share one gradient buffer.

mod delta;
mod fc;
mod loss;
mod lstm;

pub use delta::DeltaWindow;
pub use fc::{Activation, FcGrads, FcLayer};
pub use loss::{softmax_rows, softmax_xent};
pub use lstm::{Blstm, BlstmCache, LstmCache, LstmParams};
