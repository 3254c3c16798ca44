//! Minimal dense networks with manual reverse-mode gradients and Adam.

mod adam;
mod mlp;

pub use adam::{adam_step, AdamState, Ema};
pub use mlp::{timestep_embed, Activation, Gradients, Mlp};
