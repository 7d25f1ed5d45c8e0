//! Minimal 1D network engine with reverse-mode gradients.
//!
//! Layers run forward on channel-major `f64` buffers and propagate gradients
//! back layer by layer, which yields both parameter gradients for training
//! and activation gradients `d F_c / d F^[l]` for concept sensitivities.

mod checkpoint;
mod layer;
mod network;
mod presets;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::{Conv1d, Dense, Layer, LayerSpec, Residual, Shape};
pub use network::{argmax, cross_entropy, softmax, ActivationTrace, Architecture, LossGradient, Network};
pub use presets::Preset;
