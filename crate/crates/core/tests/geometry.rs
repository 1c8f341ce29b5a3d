mod common;

use common::{ball_point, dist, gaussian, norm, vector_with_norm_below};
use proptest::prelude::*;
use rand::Rng;
use thg_core::geometry::TangentVector;
use thg_core::geometry::{exp_map0, hyperbolic_distance, log_map0, mobius_add, riemannian_rescale, BALL_EPS};
use thg_core::layers::init_orthogonal;
use thg_core::seed::rng;
use thg_core::{BallPoint64, Curvature64};

const CURVATURES: [f64; 3] = [0.5, 1.0, 2.0];

fn point(coords: Vec<f64>, c: Curvature64) -> BallPoint64 {
    BallPoint64::new(coords, c).unwrap()
}

#[test]
fn log_inverts_exp_on_random_vectors() {
    let mut r = rng(11);
    for i in 0..1000 {
        let c = Curvature64::new(CURVATURES[i % 3]).unwrap();
        let dim = r.gen_range(1..12);
        let v = vector_with_norm_below(&mut r, dim, 3.0);
        let back = log_map0(&exp_map0(&TangentVector(v.clone()), c).unwrap(), c).unwrap();
        assert!(dist(&back.0, &v) < 1e-9, "case {i}: {v:?}");
    }
}

#[test]
fn mobius_identity_inverse_and_closure() {
    let mut r = rng(12);
    for i in 0..1000 {
        let c = Curvature64::new(CURVATURES[i % 3]).unwrap();
        let dim = r.gen_range(1..10);
        let x = point(ball_point(&mut r, dim, c, 0.999), c);
        let y = point(ball_point(&mut r, dim, c, 0.999), c);
        let o = BallPoint64::origin(dim, c);
        assert!(dist(mobius_add(&x, &o, c).unwrap().coords(), x.coords()) < 1e-12);
        assert!(dist(mobius_add(&o, &y, c).unwrap().coords(), y.coords()) < 1e-12);
        assert!(norm(mobius_add(&x.neg(), &x, c).unwrap().coords()) < 1e-12);
        let s = mobius_add(&x, &y, c).unwrap();
        assert!(s.norm() < 1.0 / c.sqrt());
        assert!(s.norm() <= (1.0 - BALL_EPS) / c.sqrt() * (1.0 + 1e-15));
    }
}

#[test]
fn metric_axioms_on_random_triples() {
    let mut r = rng(13);
    for i in 0..1000 {
        let c = Curvature64::new(CURVATURES[i % 3]).unwrap();
        let dim = r.gen_range(1..8);
        let [x, y, z] = [(); 3].map(|_| point(ball_point(&mut r, dim, c, 0.95), c));
        let dxy = hyperbolic_distance(&x, &y, c).unwrap();
        let dyx = hyperbolic_distance(&y, &x, c).unwrap();
        assert!((dxy - dyx).abs() < 1e-10);
        assert_eq!(hyperbolic_distance(&x, &x, c).unwrap(), 0.0);
        let dxz = hyperbolic_distance(&x, &z, c).unwrap();
        let dyz = hyperbolic_distance(&y, &z, c).unwrap();
        assert!(dxz <= dxy + dyz + 1e-9, "case {i}");
    }
}

#[test]
fn near_zero_curvature_gives_twice_euclidean_distance() {
    let mut r = rng(14);
    let c = Curvature64::new(1e-8).unwrap();
    for _ in 0..1000 {
        let dim = r.gen_range(1..8);
        let x = vector_with_norm_below(&mut r, dim, 0.5);
        let y = vector_with_norm_below(&mut r, dim, 0.5);
        let e = 2.0 * dist(&x, &y);
        if e < 1e-6 {
            continue;
        }
        let d = hyperbolic_distance(&point(x, c), &point(y, c), c).unwrap();
        assert!((d - e).abs() / e < 1e-3);
    }
}

#[test]
fn orthogonal_maps_preserve_distance_after_exp() {
    let mut r = rng(15);
    for i in 0..100 {
        let c = Curvature64::new(CURVATURES[i % 3]).unwrap();
        let dim = r.gen_range(2..9);
        let w = init_orthogonal::<f64>(dim, dim, i as u64);
        let x = vector_with_norm_below(&mut r, dim, 2.0);
        let y = vector_with_norm_below(&mut r, dim, 2.0);
        let apply = |v: &[f64]| (0..dim).map(|k| w.row(k).iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        let e = |v: Vec<f64>| exp_map0(&TangentVector(v), c).unwrap();
        let before = hyperbolic_distance(&e(x.clone()), &e(y.clone()), c).unwrap();
        let after = hyperbolic_distance(&e(apply(&x)), &e(apply(&y)), c).unwrap();
        assert!((before - after).abs() < 1e-8, "case {i}: {before} vs {after}");
    }
}

proptest! {
    #[test]
    fn exp_lands_strictly_inside(v in prop::collection::vec(-50.0f64..50.0, 1..8), ci in 0usize..3) {
        let c = Curvature64::new(CURVATURES[ci]).unwrap();
        let p = exp_map0(&TangentVector(v), c).unwrap();
        prop_assert!(p.norm() < 1.0 / c.sqrt());
    }

    #[test]
    fn rescale_is_linear_in_the_gradient(
        seed in any::<u64>(),
        a in -10.0f64..10.0,
        dim in 1usize..8,
    ) {
        let mut r = rng(seed);
        let c = Curvature64::unit();
        let theta = point(ball_point(&mut r, dim, c, 0.99), c);
        let g = gaussian(&mut r, dim);
        let h = gaussian(&mut r, dim);
        let combo: Vec<f64> = g.iter().zip(&h).map(|(x, y)| a * x + y).collect();
        let lhs = riemannian_rescale(&TangentVector(combo), &theta).unwrap();
        let rg = riemannian_rescale(&TangentVector(g), &theta).unwrap();
        let rh = riemannian_rescale(&TangentVector(h), &theta).unwrap();
        for k in 0..dim {
            prop_assert!((lhs.0[k] - (a * rg.0[k] + rh.0[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_is_nonnegative_and_symmetric(seed in any::<u64>(), dim in 1usize..6, ci in 0usize..3) {
        let mut r = rng(seed);
        let c = Curvature64::new(CURVATURES[ci]).unwrap();
        let x = point(ball_point(&mut r, dim, c, 0.99), c);
        let y = point(ball_point(&mut r, dim, c, 0.99), c);
        let d = hyperbolic_distance(&x, &y, c).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - hyperbolic_distance(&y, &x, c).unwrap()).abs() < 1e-10 * d.max(1.0));
    }
}
