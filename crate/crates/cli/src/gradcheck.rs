//! `gradcheck` subcommand: finite-difference checks of every composed graph.

use thg_core::autodiff::{grad_check, Var, DEFAULT_STEP};
use thg_core::geometry::Curvature;
use thg_core::layers::ball::{distance_rows, exp_map0_rows, log_map0_rows, mobius_add_rows};
use thg_core::layers::{init_normal, init_uniform, CompatMode, EncoderConfig, HyperbolicLinear, Module, ThgEncoder};
use thg_core::seed::derive_seed;
use thg_core::tasks::{ModelConfig, TaggerModel};
use thg_core::{Graph64, Param64, Result, Tensor64};

use crate::error::CliError;

pub const TOLERANCE: f64 = 1e-4;
pub const SEEDS: u64 = 10;

const SEQ: usize = 4;
const BATCH: usize = 2;
const D: usize = 6;
const HEADS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Worst relative error over all seeds.
    pub max_rel_err: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

type Check = fn(u64) -> f64;

fn curvature(seed: u64) -> Curvature<f64> {
    let u = init_uniform::<f64>(1, 1, 1.0, derive_seed(seed, "c")).data()[0];
    Curvature::new(1.15 + 0.85 * u).expect("positive")
}

/// Random points with norm at most `radius` of the way to the ball edge.
fn ball_rows(rows: usize, cols: usize, c: Curvature<f64>, radius: f64, seed: u64) -> Tensor64 {
    let mut t = init_normal::<f64>(rows, cols, 1.0, seed);
    let scales = init_uniform::<f64>(rows, 1, 1.0, derive_seed(seed, "r"));
    for r in 0..rows {
        let n = t.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        let target = radius * (0.5 + 0.5 * scales.data()[r].abs()) * c.max_norm();
        for x in &mut t.data_mut()[r * cols..(r + 1) * cols] {
            *x *= target / n;
        }
    }
    t
}

/// `Σ out ⊙ W` for a fixed random `W`, so every output element matters with
/// a distinct weight.
fn weighted_sum(g: &mut Graph64, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.value(out).dims2()?;
    let w = g.constant(init_normal(r, c, 1.0, derive_seed(seed, "loss_weights")))?;
    let p = g.mul(out, w)?;
    g.sum(p)
}

fn check_exp(seed: u64) -> f64 {
    let c = curvature(seed);
    let v = init_normal(3, 5, 0.7, seed);
    grad_check(
        |g, x| {
            let y = exp_map0_rows(g, x[0], c)?;
            weighted_sum(g, y, seed)
        },
        &[v],
        DEFAULT_STEP,
    )
}

fn check_log(seed: u64) -> f64 {
    let c = curvature(seed);
    let x = ball_rows(3, 5, c, 0.8, seed);
    grad_check(
        |g, v| {
            let y = log_map0_rows(g, v[0], c)?;
            weighted_sum(g, y, seed)
        },
        &[x],
        DEFAULT_STEP,
    )
}

fn check_mobius(seed: u64) -> f64 {
    let c = curvature(seed);
    let x = ball_rows(3, 5, c, 0.7, derive_seed(seed, "x"));
    let y = ball_rows(3, 5, c, 0.7, derive_seed(seed, "y"));
    grad_check(
        |g, v| {
            let m = mobius_add_rows(g, v[0], v[1], c)?;
            weighted_sum(g, m, seed)
        },
        &[x, y],
        DEFAULT_STEP,
    )
}

fn check_distance(seed: u64) -> f64 {
    let c = curvature(seed);
    let x = ball_rows(3, 5, c, 0.7, derive_seed(seed, "x"));
    let y = ball_rows(3, 5, c, 0.7, derive_seed(seed, "y"));
    grad_check(
        |g, v| {
            let d = distance_rows(g, v[0], v[1], c)?;
            weighted_sum(g, d, seed)
        },
        &[x, y],
        DEFAULT_STEP,
    )
}

/// Checks `f` with respect to `x` and every parameter in `params` at once.
fn check_with_params<F>(x: Tensor64, params: &[&Param64], seed: u64, f: F) -> f64
where
    F: Fn(&mut Graph64, Var) -> Result<Var>,
{
    let mut inputs = vec![x];
    inputs.extend(params.iter().map(|p| p.value.clone()));
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    grad_check(
        |g, v| {
            for (name, &var) in names.iter().zip(&v[1..]) {
                g.bind_param(name, var)?;
            }
            let out = f(g, v[0])?;
            weighted_sum(g, out, seed)
        },
        &inputs,
        DEFAULT_STEP,
    )
}

fn check_hyperbolic_linear(seed: u64) -> f64 {
    let c = curvature(seed);
    let mut layer = HyperbolicLinear::new("hl", 5, 4, c, derive_seed(seed, "layer"));
    let b = ball_rows(1, 4, c, 0.5, derive_seed(seed, "b"));
    layer.set_bias(b.data()).expect("inside ball");
    let x = init_normal(3, 5, 0.5, derive_seed(seed, "x"));
    check_with_params(x, &layer.params(), seed, |g, x| layer.forward(g, x))
}

fn encoder(seed: u64, compat: CompatMode) -> ThgEncoder<f64> {
    let cfg = EncoderConfig { c: curvature(seed), compat, ..EncoderConfig::new(D, HEADS) };
    let mut enc = ThgEncoder::new("enc", &cfg, derive_seed(seed, "enc")).expect("valid config");
    for (i, p) in [&mut enc.q_proj, &mut enc.k_proj].into_iter().enumerate() {
        let b = ball_rows(1, D, cfg.c, 0.4, derive_seed(seed, &format!("bias{i}")));
        p.as_hyperbolic_mut().expect("hyperbolic").set_bias(b.data()).expect("inside ball");
    }
    enc
}

fn mask(seed: u64) -> Vec<bool> {
    (0..SEQ).map(|j| j == (seed as usize) % SEQ && seed % 2 == 1).collect()
}

fn check_attention(seed: u64, compat: CompatMode) -> f64 {
    let enc = encoder(seed, compat);
    let x = init_normal(BATCH * SEQ, D, 0.8, derive_seed(seed, "x"));
    let m = mask(seed);
    check_with_params(x, &enc.params(), seed, |g, x| enc.attention(g, x, SEQ, Some(&m)))
}

fn check_attention_dot(seed: u64) -> f64 {
    check_attention(seed, CompatMode::DotProduct)
}

fn check_attention_distance(seed: u64) -> f64 {
    check_attention(seed, CompatMode::HyperbolicDistance)
}

fn check_encoder(seed: u64) -> f64 {
    let enc = encoder(seed, CompatMode::DotProduct);
    let x = init_normal(BATCH * SEQ, D, 0.8, derive_seed(seed, "x"));
    check_with_params(x, &enc.params(), seed, |g, x| enc.forward(g, x, SEQ, None))
}

fn check_tagger_loss(seed: u64) -> f64 {
    let mut cfg = ModelConfig::new(8, SEQ);
    cfg.d_model = D;
    cfg.n_heads = HEADS;
    let model = TaggerModel::new(cfg, derive_seed(seed, "model")).expect("valid config");
    let ids = init_uniform::<f64>(BATCH, SEQ, 1.0, derive_seed(seed, "ids"));
    let tokens: Vec<Vec<usize>> =
        (0..BATCH).map(|b| ids.row(b).iter().map(|u| ((u.abs() * 8.0) as usize).min(7)).collect()).collect();
    let labels: Vec<Vec<usize>> = tokens.iter().map(|s| s.iter().map(|&t| t % 2).collect()).collect();
    let batch: Vec<&[usize]> = tokens.iter().map(|s| s.as_slice()).collect();
    let lab: Vec<&[usize]> = labels.iter().map(|s| s.as_slice()).collect();
    let params = model.params();
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    let inputs: Vec<Tensor64> = params.iter().map(|p| p.value.clone()).collect();
    grad_check(
        |g, v| {
            for (name, &var) in names.iter().zip(v) {
                g.bind_param(name, var)?;
            }
            model.loss(g, &batch, &lab)
        },
        &inputs,
        DEFAULT_STEP,
    )
}

/// A tanh whose backward rule has the wrong sign; it must fail.
fn check_faulty_tanh(seed: u64) -> f64 {
    let v = init_normal(2, 3, 1.0, seed);
    grad_check(
        |g, x| {
            let y = g.map_unary(x[0], |t: f64| t.tanh(), |t: f64| -(1.0 - t.tanh().powi(2)), "faulty_tanh")?;
            weighted_sum(g, y, seed)
        },
        &[v],
        DEFAULT_STEP,
    )
}

pub fn checks(inject_fault: bool) -> Vec<(&'static str, Check)> {
    let mut v: Vec<(&'static str, Check)> = vec![
        ("exp_map0", check_exp),
        ("log_map0", check_log),
        ("mobius_add", check_mobius),
        ("hyperbolic_distance", check_distance),
        ("hyperbolic_linear", check_hyperbolic_linear),
        ("attention_dot_product", check_attention_dot),
        ("attention_hyperbolic_distance", check_attention_distance),
        ("encoder_forward", check_encoder),
        ("tagger_loss", check_tagger_loss),
    ];
    if inject_fault {
        v.push(("faulty_tanh", check_faulty_tanh));
    }
    v
}

pub fn run_checks(inject_fault: bool) -> Vec<CheckResult> {
    checks(inject_fault)
        .into_iter()
        .map(|(name, f)| {
            let max_rel_err = (0..SEEDS).map(|s| f(derive_seed(s, name))).fold(0.0, |worst, e| {
                if e.is_nan() {
                    f64::INFINITY
                } else {
                    worst.max(e)
                }
            });
            CheckResult { name, max_rel_err }
        })
        .collect()
}

/// Prints one line per check and fails if any exceeds the tolerance.
pub fn cmd_gradcheck(inject_fault: bool) -> std::result::Result<Vec<CheckResult>, CliError> {
    let results = run_checks(inject_fault);
    for r in &results {
        println!("{:<32} {:.3e}  {}", r.name, r.max_rel_err, if r.passed() { "ok" } else { "FAIL" });
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all {} checks within {TOLERANCE:e} over {SEEDS} seeds", results.len());
        Ok(results)
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}
