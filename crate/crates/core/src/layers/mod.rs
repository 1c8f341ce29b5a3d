//! Euclidean and hyperbolic linear layers, attention and the encoder block.

pub mod ball;
mod encoder;
mod init;
mod linear;

pub use encoder::{AttentionTrace, CompatMode, EncoderConfig, ModelKind, ThgEncoder, MASK_SCORE};
pub use init::{init_kaiming, init_normal, init_orthogonal, init_uniform};
pub use linear::{EuclideanLinear, HyperbolicLinear, LayerNorm, Module, Projection};
