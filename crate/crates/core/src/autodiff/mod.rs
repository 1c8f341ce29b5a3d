//! Minimal reverse-mode automatic differentiation.

mod gradcheck;
mod graph;

pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use graph::{Graph, Var, ATANH_LIMIT, LAYER_NORM_EPS};
