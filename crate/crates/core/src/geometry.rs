//! Poincaré-ball kernels on flat vectors.
//!
//! The ball of curvature `-c` is `{x : c·‖x‖² < 1}`. All maps are anchored at
//! the origin. Outputs are clipped to norm `(1 - BALL_EPS)/√c` so that a
//! subsequent `arctanh` stays finite.

use crate::error::{Result, ThgError};
use crate::scalar::{dot, lit, norm, norm_sq, Scalar};

/// Multiplicative margin kept between every ball point and the shell.
pub const BALL_EPS: f64 = 1e-5;
/// Norms below this take the analytic limit of the 0/0 forms in the origin maps.
pub const NORM_EPS: f64 = 1e-12;
/// Smallest Möbius denominator magnitude accepted before reporting degeneracy.
pub const MOBIUS_DENOM_EPS: f64 = 1e-15;

/// Positive curvature magnitude `c`; the ball has radius `1/√c`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Curvature<T>(T);

impl<T: Scalar> Curvature<T> {
    pub fn new(c: T) -> Result<Self> {
        if !c.is_finite() || c <= T::zero() {
            return Err(ThgError::Domain(format!("curvature must be finite and > 0, got {c}")));
        }
        Ok(Self(c))
    }

    pub fn unit() -> Self {
        Self(T::one())
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    #[inline]
    pub fn sqrt(self) -> T {
        self.0.sqrt()
    }

    /// Largest norm a clipped point may have: `(1 - BALL_EPS)/√c`.
    #[inline]
    pub fn max_norm(self) -> T {
        (T::one() - lit(BALL_EPS)) / self.sqrt()
    }
}

/// Vector in the tangent space at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<T>(pub Vec<T>);

impl<T: Scalar> TangentVector<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }
}

/// Point strictly inside the ball `B^{d,c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint<T> {
    coords: Vec<T>,
    c: Curvature<T>,
}

impl<T: Scalar> BallPoint<T> {
    /// Wraps `coords`, rejecting anything on or outside the shell.
    pub fn new(coords: Vec<T>, c: Curvature<T>) -> Result<Self> {
        check_finite(&coords, "ball point")?;
        if c.value() * norm_sq(&coords) >= T::one() {
            return Err(ThgError::Domain(format!(
                "point with norm {} lies outside the ball of radius {}",
                norm(&coords),
                T::one() / c.sqrt()
            )));
        }
        Ok(Self { coords, c })
    }

    pub fn origin(dim: usize, c: Curvature<T>) -> Self {
        Self { coords: vec![T::zero(); dim], c }
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature<T> {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> T {
        norm(&self.coords)
    }

    pub fn neg(&self) -> Self {
        Self { coords: self.coords.iter().map(|&x| -x).collect(), c: self.c }
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }
}

fn check_finite<T: Scalar>(xs: &[T], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ThgError::Domain(format!("non-finite coordinate in {what}")))
    }
}

fn same_ball<T: Scalar>(x: &BallPoint<T>, y: &BallPoint<T>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(ThgError::Shape(format!("dimension {} vs {}", x.dim(), y.dim())));
    }
    if x.c != y.c {
        return Err(ThgError::Contract("points belong to balls of different curvature".into()));
    }
    Ok(())
}

/// Rescales `x` in place onto norm `(1 - BALL_EPS)/√c` if it lies beyond it.
pub(crate) fn clip_in_place<T: Scalar>(x: &mut [T], c: Curvature<T>) {
    let n = norm(x);
    let max = c.max_norm();
    if n > max {
        let s = max / n;
        x.iter_mut().for_each(|v| *v = *v * s);
    }
}

/// Exponential map at the origin: `tanh(√c‖v‖) · v / (√c‖v‖)`.
pub fn exp_map0<T: Scalar>(v: &TangentVector<T>, c: Curvature<T>) -> Result<BallPoint<T>> {
    check_finite(&v.0, "tangent vector")?;
    let n = v.norm();
    if n < lit(NORM_EPS) {
        return Ok(BallPoint::origin(v.0.len(), c));
    }
    let sc = c.sqrt() * n;
    let scale = sc.tanh() / sc;
    let mut coords: Vec<T> = v.0.iter().map(|&x| x * scale).collect();
    clip_in_place(&mut coords, c);
    Ok(BallPoint { coords, c })
}

/// Logarithmic map at the origin: `arctanh(√c‖x‖) · x / (√c‖x‖)`.
pub fn log_map0<T: Scalar>(x: &BallPoint<T>, c: Curvature<T>) -> Result<TangentVector<T>> {
    check_finite(&x.coords, "ball point")?;
    let mut coords = x.coords.clone();
    clip_in_place(&mut coords, c);
    let n = norm(&coords);
    if n < lit(NORM_EPS) {
        return Ok(TangentVector(vec![T::zero(); coords.len()]));
    }
    let sc = c.sqrt() * n;
    if sc >= T::one() {
        return Err(ThgError::Domain("arctanh singularity: point on the shell".into()));
    }
    let scale = sc.atanh() / sc;
    Ok(TangentVector(coords.into_iter().map(|v| v * scale).collect()))
}

/// Möbius addition `x ⊕_c y`, clipped back into the ball.
pub fn mobius_add<T: Scalar>(x: &BallPoint<T>, y: &BallPoint<T>, c: Curvature<T>) -> Result<BallPoint<T>> {
    same_ball(x, y)?;
    let mut coords = mobius_add_raw(&x.coords, &y.coords, c)?;
    clip_in_place(&mut coords, c);
    Ok(BallPoint { coords, c })
}

pub(crate) fn mobius_add_raw<T: Scalar>(x: &[T], y: &[T], c: Curvature<T>) -> Result<Vec<T>> {
    let c = c.value();
    let two = lit::<T>(2.0);
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let den = T::one() + two * c * xy + c * c * x2 * y2;
    if den.abs() < lit(MOBIUS_DENOM_EPS) {
        return Err(ThgError::Degenerate(format!("Möbius denominator {den}")));
    }
    let a = (T::one() + two * c * xy + c * y2) / den;
    let b = (T::one() - c * x2) / den;
    Ok(x.iter().zip(y).map(|(&xi, &yi)| a * xi + b * yi).collect())
}

/// Geodesic distance `(2/√c) · arctanh(√c ‖(-x) ⊕ y‖)`.
pub fn hyperbolic_distance<T: Scalar>(x: &BallPoint<T>, y: &BallPoint<T>, c: Curvature<T>) -> Result<T> {
    same_ball(x, y)?;
    if x.coords == y.coords {
        return Ok(T::zero());
    }
    let diff = mobius_add(&x.neg(), y, c)?;
    let sc = c.sqrt() * diff.norm();
    Ok(lit::<T>(2.0) / c.sqrt() * sc.atanh())
}

/// Conformal factor `(1 - ‖θ‖²)² / 4` applied to Euclidean gradients.
///
/// Uses the unit-ball form regardless of the point's curvature.
#[inline]
pub fn riemannian_factor<T: Scalar>(theta: &[T]) -> T {
    let s = T::one() - norm_sq(theta);
    s * s / lit(4.0)
}

/// Converts a Euclidean gradient at `theta` into the Riemannian gradient.
pub fn riemannian_rescale<T: Scalar>(grad_e: &TangentVector<T>, theta: &BallPoint<T>) -> Result<TangentVector<T>> {
    check_finite(&grad_e.0, "gradient")?;
    if grad_e.0.len() != theta.dim() {
        return Err(ThgError::Shape(format!("gradient dim {} vs point dim {}", grad_e.0.len(), theta.dim())));
    }
    let f = riemannian_factor(&theta.coords);
    Ok(TangentVector(grad_e.0.iter().map(|&g| g * f).collect()))
}

/// Identity inside the clipping radius, radial rescale onto it outside.
pub fn project_to_ball<T: Scalar>(x: &[T], c: Curvature<T>) -> Result<BallPoint<T>> {
    check_finite(x, "vector")?;
    let mut coords = x.to_vec();
    clip_in_place(&mut coords, c);
    Ok(BallPoint { coords, c })
}
