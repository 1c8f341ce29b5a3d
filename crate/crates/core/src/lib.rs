//! Transformer encoder with hyperbolic query/key projections.
//!
//! The query and key linears map `x ↦ log_0^c(exp_0^c(w·x) ⊕_c b)` on the
//! Poincaré ball while values, the output projection and the feed-forward
//! network stay Euclidean. Scores are plain dot products of the resulting
//! tangent vectors.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: ball kernels on flat vectors.
//! - [`autodiff`]: a define-by-run reverse-mode tape and a finite-difference checker.
//! - [`layers`]: linear layers, attention and the encoder block.
//! - [`optim`]: Adam, RMSprop and Riemannian SGD with ball re-projection.
//! - [`tasks`]: the synthetic span-tagging task, training loop and metrics.
//!
//! Everything is generic over [`Scalar`]; the `*64` aliases below pin f64,
//! which is what the training pipeline uses.

pub mod autodiff;
pub mod error;
pub mod geometry;
pub mod layers;
pub mod optim;
pub mod param;
pub mod scalar;
pub mod seed;
pub mod tasks;
pub mod tensor;

pub use error::{Result, ThgError};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Curvature64 = geometry::Curvature<f64>;
pub type BallPoint64 = geometry::BallPoint<f64>;
pub type TangentVector64 = geometry::TangentVector<f64>;
pub type Param64 = param::Param<f64>;
pub type HyperbolicLinear64 = layers::HyperbolicLinear<f64>;
pub type EuclideanLinear64 = layers::EuclideanLinear<f64>;
pub type ThgEncoder64 = layers::ThgEncoder<f64>;
pub type EncoderConfig64 = layers::EncoderConfig<f64>;
pub type OptimConfig64 = optim::OptimConfig<f64>;
pub type OptimizerState64 = optim::OptimizerState<f64>;
pub type ModelConfig64 = tasks::ModelConfig<f64>;
pub type TaggerModel64 = tasks::TaggerModel<f64>;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Curvature32 = geometry::Curvature<f32>;
pub type BallPoint32 = geometry::BallPoint<f32>;
