//! Row-wise Poincaré-ball maps expressed as differentiable graph nodes.
//!
//! Each row of a `[n×d]` node is treated as one point. These mirror the
//! kernels in [`crate::geometry`], including the clipping behavior.

use crate::autodiff::{Graph, Var};
use crate::error::{Result, ThgError};
use crate::geometry::{Curvature, MOBIUS_DENOM_EPS};
use crate::scalar::{lit, Scalar};

/// `exp_0^c` on every row.
pub fn exp_map0_rows<T: Scalar>(g: &mut Graph<T>, v: Var, c: Curvature<T>) -> Result<Var> {
    let n = g.row_norm(v)?;
    let s = g.scale(n, c.sqrt())?;
    let r = g.tanh_ratio(s)?;
    let out = g.mul(v, r)?;
    g.clip_rows(out, c.max_norm())
}

/// `log_0^c` on every row; rows are clipped into the ball first.
pub fn log_map0_rows<T: Scalar>(g: &mut Graph<T>, x: Var, c: Curvature<T>) -> Result<Var> {
    let x = g.clip_rows(x, c.max_norm())?;
    let n = g.row_norm(x)?;
    let s = g.scale(n, c.sqrt())?;
    let r = g.atanh_ratio(s)?;
    g.mul(x, r)
}

/// Row-wise Möbius addition. `y` has either as many rows as `x` or a single
/// row that is added to every row of `x`.
pub fn mobius_add_rows<T: Scalar>(g: &mut Graph<T>, x: Var, y: Var, c: Curvature<T>) -> Result<Var> {
    let cv = c.value();
    let two_c = lit::<T>(2.0) * cv;
    let xy_prod = g.mul(x, y)?;
    let xy = g.row_sum(xy_prod)?;
    let xx_prod = g.mul(x, x)?;
    let x2 = g.row_sum(xx_prod)?;
    let yy_prod = g.mul(y, y)?;
    let y2 = g.row_sum(yy_prod)?;

    let two_c_xy = g.scale(xy, two_c)?;
    // 1 + 2c<x,y> + c|y|²
    let c_y2 = g.scale(y2, cv)?;
    let a = g.add(two_c_xy, c_y2)?;
    let a = g.add_scalar(a, T::one())?;
    // 1 - c|x|²
    let b = g.scale(x2, -cv)?;
    let b = g.add_scalar(b, T::one())?;
    // 1 + 2c<x,y> + c²|x|²|y|²
    let x2y2 = g.mul(x2, y2)?;
    let den = g.scale(x2y2, cv * cv)?;
    let den = g.add(den, two_c_xy)?;
    let den = g.add_scalar(den, T::one())?;
    if let Some(d) = g.value(den).data().iter().find(|d| d.abs() < lit(MOBIUS_DENOM_EPS)) {
        return Err(ThgError::Degenerate(format!("Möbius denominator {d}")));
    }

    let ax = g.mul(x, a)?;
    let by = g.mul(y, b)?;
    let num = g.add(ax, by)?;
    let out = g.div(num, den)?;
    g.clip_rows(out, c.max_norm())
}

/// Geodesic distance between paired rows of `x` and `y`, as an `[n×1]` node.
pub fn distance_rows<T: Scalar>(g: &mut Graph<T>, x: Var, y: Var, c: Curvature<T>) -> Result<Var> {
    let nx = g.neg(x)?;
    let diff = mobius_add_rows(g, nx, y, c)?;
    let n = g.row_norm(diff)?;
    let s = g.scale(n, c.sqrt())?;
    let a = g.atanh(s)?;
    g.scale(a, lit::<T>(2.0) / c.sqrt())
}
