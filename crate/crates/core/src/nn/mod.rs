//! Minimal dense-network core: batched forward/backward with exact
//! reverse-mode gradients, LayerNorm, Adam, and a byte-stable checkpoint
//! format.
//!
//! Parameters live in one flat `Vec<f64>` per network (layout described by
//! [`Arch`]), which keeps the optimizer, gradient checks and checkpointing
//! trivial. Everything is 64-bit: the networks here are tiny and
//! determinism matters more than speed.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_mlp, write_mlp, CheckpointError};
pub use mlp::{layer_norm, Activation, Arch, Cache, Mlp, NnError, LN_EPS};
