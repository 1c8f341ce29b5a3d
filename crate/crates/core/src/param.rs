use crate::geometry::Curvature;
use crate::tensor::Tensor;

/// How the optimizer must treat a parameter after each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint<T> {
    /// Unconstrained Euclidean parameter.
    Free,
    /// Each row must stay inside the Poincaré ball of this curvature.
    Ball(Curvature<T>),
}

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub constraint: Constraint<T>,
}

impl<T> Param<T> {
    pub fn free(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self { name: name.into(), value, constraint: Constraint::Free }
    }

    pub fn ball(name: impl Into<String>, value: Tensor<T>, c: Curvature<T>) -> Self {
        Self { name: name.into(), value, constraint: Constraint::Ball(c) }
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.constraint, Constraint::Ball(_))
    }
}
