//! Sampling helpers and a loop-based Euclidean encoder used as an oracle.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thg_core::layers::Module;
use thg_core::{Curvature64, ThgEncoder64};

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform direction with norm uniform in `[0, max_norm)`.
pub fn vector_with_norm_below(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Vec<f64> {
    let v = gaussian(rng, dim);
    let n = norm(&v);
    let r = rng.gen::<f64>() * max_norm;
    v.iter().map(|x| x * r / n).collect()
}

/// A point strictly inside the ball of curvature `c`, within `frac` of its radius.
pub fn ball_point(rng: &mut ChaCha8Rng, dim: usize, c: Curvature64, frac: f64) -> Vec<f64> {
    vector_with_norm_below(rng, dim, frac / c.sqrt())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

type Mat = Vec<Vec<f64>>;

fn matrix(t: &thg_core::Tensor64) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// `x · wᵀ + b` with `b` optional.
fn linear(x: &Mat, w: &Mat, b: Option<&[f64]>) -> Mat {
    x.iter()
        .map(|row| {
            w.iter()
                .enumerate()
                .map(|(o, wr)| wr.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + b.map_or(0.0, |b| b[o]))
                .collect()
        })
        .collect()
}

fn layer_norm(x: &Mat, gamma: &[f64], beta: &[f64]) -> Mat {
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mu = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let s = (var + 1e-5).sqrt();
            row.iter().enumerate().map(|(j, v)| (v - mu) / s * gamma[j] + beta[j]).collect()
        })
        .collect()
}

fn param<'a>(enc: &'a ThgEncoder64, suffix: &str) -> &'a thg_core::Param64 {
    enc.params().into_iter().find(|p| p.name.ends_with(suffix)).expect("parameter exists")
}

/// Plain scaled dot-product attention of one sequence, reading weights from
/// `enc` but treating the query and key projections as bias-free linears.
pub fn reference_attention(enc: &ThgEncoder64, x: &Mat) -> Mat {
    let w = |s: &str| matrix(&param(enc, s).value);
    let b = |s: &str| param(enc, s).value.data().to_vec();
    let q = linear(x, &w("q_proj.w"), None);
    let k = linear(x, &w("k_proj.w"), None);
    let v = linear(x, &w("v_proj.w"), Some(&b("v_proj.b")));
    let n = x.len();
    let dk = enc.d_head();
    let mut concat = vec![vec![0.0; enc.d_model()]; n];
    for h in 0..enc.n_heads {
        let cols = h * dk..(h + 1) * dk;
        for i in 0..n {
            let scores: Vec<f64> =
                (0..n).map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dk as f64).sqrt()).collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in cols.clone() {
                concat[i][c] = (0..n).map(|j| e[j] / z * v[j][c]).sum();
            }
        }
    }
    linear(&concat, &w("out_proj.w"), Some(&b("out_proj.b")))
}

/// Post-norm encoder block built from [`reference_attention`].
pub fn reference_encoder(enc: &ThgEncoder64, x: &Mat) -> Mat {
    let w = |s: &str| matrix(&param(enc, s).value);
    let b = |s: &str| param(enc, s).value.data().to_vec();
    let a = reference_attention(enc, x);
    let r1: Mat = x.iter().zip(&a).map(|(u, v)| u.iter().zip(v).map(|(p, q)| p + q).collect()).collect();
    let y1 = layer_norm(&r1, &b("norm1.gamma"), &b("norm1.beta"));
    let f = linear(&y1, &w("ffn_in.w"), Some(&b("ffn_in.b")));
    let f: Mat = f.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let f = linear(&f, &w("ffn_out.w"), Some(&b("ffn_out.b")));
    let r2: Mat = y1.iter().zip(&f).map(|(u, v)| u.iter().zip(v).map(|(p, q)| p + q).collect()).collect();
    layer_norm(&r2, &b("norm2.gamma"), &b("norm2.beta"))
}
