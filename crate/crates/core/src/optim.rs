//! Adam, RMSprop and Riemannian SGD.
//!
//! Ball-constrained parameters are treated row by row: the Euclidean
//! gradient is scaled by the conformal factor `(1 - ‖θ‖²)²/4` (always for
//! RSGD, optionally for Adam/RMSprop) and the updated row is projected back
//! into the ball.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, ThgError};
use crate::geometry::{clip_in_place, riemannian_factor};
use crate::param::{Constraint, Param};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
    Rsgd,
}

impl OptimizerKind {
    pub fn default_lr(self) -> f64 {
        match self {
            Self::Adam => 1e-3,
            Self::RmsProp => 5e-4,
            Self::Rsgd => 1e-2,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::RmsProp => "rmsprop",
            Self::Rsgd => "rsgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::RmsProp),
            "rsgd" => Ok(Self::Rsgd),
            _ => Err(format!("unknown optimizer `{s}` (adam | rmsprop | rsgd)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig<T> {
    pub kind: OptimizerKind,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    /// RMSprop smoothing constant.
    pub alpha: T,
    pub eps: T,
    /// Apply the conformal rescale to ball-parameter gradients under Adam/RMSprop.
    pub riemannian_rescale: bool,
}

impl<T: Scalar> OptimConfig<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            lr: lit(kind.default_lr()),
            beta1: lit(0.9),
            beta2: lit(0.999),
            alpha: lit(0.99),
            eps: lit(1e-8),
            riemannian_rescale: true,
        }
    }

    pub fn with_lr(mut self, lr: T) -> Self {
        self.lr = lr;
        self
    }
}

/// Moment buffers and step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: OptimConfig<T>,
    step: u64,
    first: HashMap<String, Vec<T>>,
    second: HashMap<String, Vec<T>>,
}

fn grad_map<T: Scalar>(grads: &[(String, Tensor<T>)]) -> HashMap<&str, &Tensor<T>> {
    grads.iter().map(|(n, g)| (n.as_str(), g)).collect()
}

fn lookup<'a, T: Scalar>(map: &HashMap<&str, &'a Tensor<T>>, p: &Param<T>) -> Result<&'a Tensor<T>> {
    let g = map
        .get(p.name.as_str())
        .ok_or_else(|| ThgError::Contract(format!("no gradient for parameter `{}`", p.name)))?;
    if g.shape() != p.value.shape() {
        return Err(ThgError::Shape(format!(
            "gradient {:?} for parameter `{}` of shape {:?}",
            g.shape(),
            p.name,
            p.value.shape()
        )));
    }
    Ok(g)
}

/// Gradient as seen by the update rule: rescaled row-wise for ball parameters when asked.
fn effective_grad<T: Scalar>(p: &Param<T>, g: &Tensor<T>, rescale: bool) -> Vec<T> {
    let mut out = g.data().to_vec();
    if let (Constraint::Ball(_), true) = (p.constraint, rescale) {
        let d = p.value.cols();
        for (row, grow) in p.value.data().chunks(d).zip(out.chunks_mut(d)) {
            let f = riemannian_factor(row);
            grow.iter_mut().for_each(|v| *v = *v * f);
        }
    }
    out
}

fn reproject<T: Scalar>(p: &mut Param<T>) {
    if let Constraint::Ball(c) = p.constraint {
        let d = p.value.cols();
        for row in p.value.data_mut().chunks_mut(d) {
            clip_in_place(row, c);
        }
    }
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimConfig<T>) -> Self {
        Self { config, step: 0, first: HashMap::new(), second: HashMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Dispatches on the configured optimizer kind.
    pub fn step(&mut self, params: &mut [&mut Param<T>], grads: &[(String, Tensor<T>)]) -> Result<()> {
        match self.config.kind {
            OptimizerKind::Adam => self.adam_step(params, grads),
            OptimizerKind::RmsProp => self.rmsprop_step(params, grads),
            OptimizerKind::Rsgd => self.riemannian_sgd_step(params, grads),
        }
    }

    pub fn adam_step(&mut self, params: &mut [&mut Param<T>], grads: &[(String, Tensor<T>)]) -> Result<()> {
        let map = grad_map(grads);
        let cfg = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - cfg.beta1.powi(t);
        let bc2 = T::one() - cfg.beta2.powi(t);
        for p in params.iter_mut() {
            let g = effective_grad(p, lookup(&map, p)?, cfg.riemannian_rescale);
            let n = g.len();
            let m = self.first.entry(p.name.clone()).or_insert_with(|| vec![T::zero(); n]);
            let v = self.second.entry(p.name.clone()).or_insert_with(|| vec![T::zero(); n]);
            for (((theta, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = cfg.beta1 * *mi + (T::one() - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (T::one() - cfg.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta = *theta - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            reproject(p);
        }
        Ok(())
    }

    pub fn rmsprop_step(&mut self, params: &mut [&mut Param<T>], grads: &[(String, Tensor<T>)]) -> Result<()> {
        let map = grad_map(grads);
        let cfg = self.config;
        self.step += 1;
        for p in params.iter_mut() {
            let g = effective_grad(p, lookup(&map, p)?, cfg.riemannian_rescale);
            let n = g.len();
            let sq = self.second.entry(p.name.clone()).or_insert_with(|| vec![T::zero(); n]);
            for ((theta, &gi), si) in p.value.data_mut().iter_mut().zip(&g).zip(sq.iter_mut()) {
                *si = cfg.alpha * *si + (T::one() - cfg.alpha) * gi * gi;
                *theta = *theta - cfg.lr * gi / (si.sqrt() + cfg.eps);
            }
            reproject(p);
        }
        Ok(())
    }

    /// Plain SGD for Euclidean parameters; `θ ← proj(θ - lr·∇_B)` for ball parameters.
    pub fn riemannian_sgd_step(&mut self, params: &mut [&mut Param<T>], grads: &[(String, Tensor<T>)]) -> Result<()> {
        let map = grad_map(grads);
        let lr = self.config.lr;
        self.step += 1;
        for p in params.iter_mut() {
            let g = effective_grad(p, lookup(&map, p)?, true);
            for (theta, &gi) in p.value.data_mut().iter_mut().zip(&g) {
                *theta = *theta - lr * gi;
            }
            reproject(p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Curvature;

    fn scalar_param(v: f64) -> Param<f64> {
        Param::free("x", Tensor::scalar(v))
    }

    fn grads(name: &str, g: Tensor<f64>) -> Vec<(String, Tensor<f64>)> {
        vec![(name.to_string(), g)]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for kind in [OptimizerKind::Adam, OptimizerKind::RmsProp, OptimizerKind::Rsgd] {
            let mut p = Param::free("w", Tensor::from_rows(&[&[0.3, -1.0]]).unwrap());
            let before = p.value.clone();
            let mut opt = OptimizerState::new(OptimConfig::new(kind));
            opt.step(&mut [&mut p], &grads("w", Tensor::zeros(&[1, 2]))).unwrap();
            assert_eq!(p.value, before);
        }
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = scalar_param(0.5);
        let mut opt = OptimizerState::new(OptimConfig::new(OptimizerKind::Adam));
        opt.adam_step(&mut [&mut p], &grads("x", Tensor::scalar(1.0))).unwrap();
        // Δθ = -lr · 1 / (1 + eps)
        assert!((p.value.data()[0] - (0.5 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_first_step() {
        let g = 3.0;
        let mut p = scalar_param(0.5);
        let mut opt = OptimizerState::new(OptimConfig::new(OptimizerKind::RmsProp));
        opt.rmsprop_step(&mut [&mut p], &grads("x", Tensor::scalar(g))).unwrap();
        let expected = 0.5 - 5e-4 * g / ((0.01f64 * g * g).sqrt() + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn rsgd_quarter_factor_at_origin() {
        let c = Curvature::unit();
        let mut p = Param::ball("b", Tensor::zeros(&[1, 2]), c);
        let mut opt = OptimizerState::new(OptimConfig::new(OptimizerKind::Rsgd).with_lr(0.5));
        opt.riemannian_sgd_step(&mut [&mut p], &grads("b", Tensor::from_rows(&[&[4.0, 0.0]]).unwrap())).unwrap();
        assert_eq!(p.value.data(), &[-0.5, 0.0]);

        // lr = 1 lands exactly on the unit shell, which the projection pulls inside.
        let mut p = Param::ball("b", Tensor::zeros(&[1, 2]), c);
        let mut opt = OptimizerState::new(OptimConfig::new(OptimizerKind::Rsgd).with_lr(1.0));
        opt.riemannian_sgd_step(&mut [&mut p], &grads("b", Tensor::from_rows(&[&[4.0, 0.0]]).unwrap())).unwrap();
        assert!((p.value.data()[0] + (1.0 - 1e-5)).abs() < 1e-15);
    }

    #[test]
    fn rsgd_update_vanishes_near_shell() {
        let c = Curvature::unit();
        let r = 0.999_999f64;
        let mut p = Param::ball("b", Tensor::from_rows(&[&[r, 0.0]]).unwrap(), c);
        let mut opt = OptimizerState::new(OptimConfig::new(OptimizerKind::Rsgd).with_lr(1.0));
        opt.riemannian_sgd_step(&mut [&mut p], &grads("b", Tensor::from_rows(&[&[0.0, 1.0]]).unwrap())).unwrap();
        assert!(p.value.data()[1].abs() < 1e-10);
    }

    #[test]
    fn ball_params_are_reprojected() {
        let c = Curvature::new(4.0).unwrap();
        for kind in [OptimizerKind::Adam, OptimizerKind::RmsProp, OptimizerKind::Rsgd] {
            let mut p = Param::ball("b", Tensor::from_rows(&[&[0.49, 0.0]]).unwrap(), c);
            let cfg = OptimConfig::new(kind).with_lr(10.0);
            let mut opt = OptimizerState::new(cfg);
            for _ in 0..5 {
                opt.step(&mut [&mut p], &grads("b", Tensor::from_rows(&[&[-1e3, -1e3]]).unwrap())).unwrap();
                let n = p.value.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(n <= (1.0 - 1e-5) / 2.0 + 1e-16, "{kind}: {n}");
            }
        }
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut p = scalar_param(1.0);
        let mut opt = OptimizerState::new(OptimConfig::new(OptimizerKind::Adam));
        assert!(matches!(opt.step(&mut [&mut p], &grads("other", Tensor::scalar(1.0))), Err(ThgError::Contract(_))));
    }

    #[test]
    fn rescale_flag_changes_ball_gradients_only() {
        let c = Curvature::unit();
        let run = |rescale: bool| {
            let mut b = Param::ball("b", Tensor::from_rows(&[&[0.5, 0.0]]).unwrap(), c);
            let mut w = Param::free("w", Tensor::from_rows(&[&[0.5, 0.0]]).unwrap());
            let mut cfg = OptimConfig::new(OptimizerKind::RmsProp);
            cfg.riemannian_rescale = rescale;
            let mut opt = OptimizerState::new(cfg);
            let g = Tensor::from_rows(&[&[0.2, 0.0]]).unwrap();
            let gs = vec![("b".to_string(), g.clone()), ("w".to_string(), g.clone())];
            for _ in 0..3 {
                opt.step(&mut [&mut b, &mut w], &gs).unwrap();
            }
            (b.value, w.value)
        };
        let (b_on, w_on) = run(true);
        let (b_off, w_off) = run(false);
        assert_eq!(w_on, w_off);
        assert_ne!(b_on, b_off);
    }
}
