mod common;

use common::{norm, reference_attention, reference_encoder};
use rand::Rng;
use thg_core::geometry::{exp_map0, mobius_add, BallPoint, TangentVector, BALL_EPS};
use thg_core::layers::{init_normal, CompatMode, EncoderConfig, HyperbolicLinear, Module, ThgEncoder};
use thg_core::seed::rng;
use thg_core::{Curvature64, Graph64, Tensor64, ThgEncoder64};

fn rows(t: &Tensor64) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn encoder(seed: u64, c: f64) -> ThgEncoder64 {
    let cfg = EncoderConfig { c: Curvature64::new(c).unwrap(), ..EncoderConfig::new(12, 3) };
    ThgEncoder::new("enc", &cfg, seed).unwrap()
}

#[test]
fn zero_bias_linear_recovers_matrix_product() {
    for seed in 0..20 {
        let c = Curvature64::new([0.5, 1.0, 2.0][seed as usize % 3]).unwrap();
        let layer = HyperbolicLinear::new("hl", 7, 5, c, seed);
        let x = init_normal(6, 7, 0.3, seed + 100);
        let mut g = Graph64::new();
        let xv = g.constant(x.clone()).unwrap();
        let y = layer.forward(&mut g, xv).unwrap();
        let wx = x.matmul(&layer.w.value.transpose().unwrap()).unwrap();
        assert!(g.value(y).max_abs_diff(&wx) < 1e-12);
    }
}

#[test]
fn zero_bias_block_matches_loop_reference() {
    for seed in 0..10 {
        let enc = encoder(seed, [0.5, 1.0, 2.0][seed as usize % 3]);
        let x = init_normal(9, 12, 0.4, seed + 50);
        let mut g = Graph64::new();
        let xv = g.constant(x.clone()).unwrap();
        let a = enc.attention(&mut g, xv, 9, None).unwrap();
        let y = enc.forward(&mut g, xv, 9, None).unwrap();
        assert!(max_diff(&rows(g.value(a)), &reference_attention(&enc, &rows(&x))) < 1e-9);
        assert!(max_diff(&rows(g.value(y)), &reference_encoder(&enc, &rows(&x))) < 1e-9);
    }
}

#[test]
fn attention_rows_are_distributions() {
    for compat in [CompatMode::DotProduct, CompatMode::HyperbolicDistance] {
        let cfg = EncoderConfig { compat, ..EncoderConfig::new(12, 3) };
        let enc = ThgEncoder::new("enc", &cfg, 8).unwrap();
        let mut g = Graph64::new();
        let xv = g.constant(init_normal(14, 12, 1.0, 9)).unwrap();
        let trace = enc.attention_trace(&mut g, xv, 7, None).unwrap();
        for w in trace.weights.iter().flatten() {
            let t = g.value(*w);
            for i in 0..t.rows() {
                assert!(t.row(i).iter().all(|&p| p >= 0.0));
                assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bias_toward_the_shell_pushes_output_outward_but_never_out() {
    for c in [0.5, 1.0, 2.0] {
        let c = Curvature64::new(c).unwrap();
        let u = [0.6, 0.8];
        let x = BallPoint::origin(2, c);
        let mut last = -1.0;
        for t in [0.0, 0.5, 0.9, 0.99, 1.0 - BALL_EPS] {
            let b = BallPoint::new(u.iter().map(|v| v * t / c.sqrt()).collect(), c).unwrap();
            let p = mobius_add(&x, &b, c).unwrap();
            assert!(p.norm() < 1.0 / c.sqrt());
            assert!(p.norm() > last);
            last = p.norm();
        }
        assert!(((1.0 - BALL_EPS) / c.sqrt() - last).abs() < 1e-12);
    }

    let mut r = rng(21);
    let c = Curvature64::unit();
    for _ in 0..50 {
        let v: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
        let e = exp_map0(&TangentVector(v), c).unwrap();
        let mut last = -1.0;
        for t in [0.0, 0.5, 0.9, 0.99] {
            let b = BallPoint::new(e.coords().iter().map(|x| x / e.norm() * t).collect(), c).unwrap();
            let p = mobius_add(&e, &b, c).unwrap();
            assert!(p.norm() < 1.0 && p.norm() >= last);
            last = p.norm();
        }
    }
}

#[test]
fn bias_changes_pairwise_output_distances() {
    let c = Curvature64::unit();
    let mut layer = HyperbolicLinear::new("hl", 4, 4, c, 5);
    let x = Tensor64::from_rows(&[&[0.3, -0.2, 0.5, 0.1], &[-0.4, 0.6, 0.0, 0.2]]).unwrap();
    let pair_distance = |layer: &HyperbolicLinear<f64>| {
        let mut g = Graph64::new();
        let xv = g.constant(x.clone()).unwrap();
        let yv = layer.forward(&mut g, xv).unwrap();
        let y = g.value(yv).clone();
        let d: Vec<f64> = y.row(0).iter().zip(y.row(1)).map(|(a, b)| a - b).collect();
        norm(&d)
    };
    layer.set_bias(&[0.0; 4]).unwrap();
    let d1 = pair_distance(&layer);
    layer.set_bias(&[0.5, -0.3, 0.4, 0.2]).unwrap();
    let d2 = pair_distance(&layer);
    assert!((d1 - d2).abs() > 1e-3, "{d1} vs {d2}");
}

#[test]
fn every_encoder_parameter_gets_gradient() {
    for compat in [CompatMode::DotProduct, CompatMode::HyperbolicDistance] {
        let cfg = EncoderConfig { compat, ..EncoderConfig::new(12, 3) };
        let mut enc = ThgEncoder::new("enc", &cfg, 2).unwrap();
        for p in [&mut enc.q_proj, &mut enc.k_proj] {
            p.as_hyperbolic_mut().unwrap().set_bias(&[0.05; 12]).unwrap();
        }
        let mut g = Graph64::new();
        let xv = g.constant(init_normal(10, 12, 1.0, 3)).unwrap();
        let y = enc.forward(&mut g, xv, 5, None).unwrap();
        let w = g.constant(init_normal(10, 12, 1.0, 4)).unwrap();
        let p = g.mul(y, w).unwrap();
        let loss = g.sum(p).unwrap();
        g.backward(loss).unwrap();
        let grads = g.param_grads();
        assert_eq!(grads.len(), enc.params().len());
        for (name, t) in grads {
            assert!(t.data().iter().any(|v| *v != 0.0), "{compat}: {name} has zero gradient");
        }
    }
}
