//! Weight initializers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::scalar::{lit, Scalar};
use crate::seed::rng;
use crate::tensor::Tensor;

/// Orthogonal `rows × cols` matrix from the QR factor of a Gaussian sample.
///
/// The R factor's diagonal is kept nonnegative. For square output `wᵀw = I`;
/// for rectangular output the shorter side is orthonormal.
pub fn init_orthogonal<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Tensor<T> {
    assert!(rows >= 1 && cols >= 1, "orthogonal init needs positive dims");
    let mut rng = rng(seed);
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // Column-major: `short` columns of length `tall`.
    let mut q: Vec<Vec<f64>> =
        (0..short).map(|_| (0..tall).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    for j in 0..short {
        // Two Gram-Schmidt passes keep orthogonality at roundoff level.
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = q.split_at_mut(j);
                let p: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                rest[0].iter_mut().zip(&done[k]).for_each(|(v, &u)| *v -= p * u);
            }
        }
        let n = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        q[j].iter_mut().for_each(|v| *v /= n);
    }
    let mut data = vec![T::zero(); rows * cols];
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            if rows >= cols {
                data[i * cols + j] = lit(v);
            } else {
                data[j * cols + i] = lit(v);
            }
        }
    }
    Tensor::matrix(rows, cols, data).expect("dims are positive")
}

/// He/Kaiming normal init in fan-in mode: std `sqrt(2 / cols)`.
pub fn init_kaiming<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Tensor<T> {
    init_normal(rows, cols, (2.0 / cols as f64).sqrt(), seed)
}

pub fn init_normal<T: Scalar>(rows: usize, cols: usize, std: f64, seed: u64) -> Tensor<T> {
    assert!(rows >= 1 && cols >= 1, "init needs positive dims");
    let mut rng = rng(seed);
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            lit(std * z)
        })
        .collect::<Vec<T>>();
    Tensor::matrix(rows, cols, data).expect("dims are positive")
}

/// Entries uniform on `[-bound, bound)`.
pub fn init_uniform<T: Scalar>(rows: usize, cols: usize, bound: f64, seed: u64) -> Tensor<T> {
    let mut rng = rng(seed);
    let dist = Uniform::new(-bound, bound);
    let data = (0..rows * cols).map(|_| lit(rng.sample(dist))).collect::<Vec<T>>();
    Tensor::matrix(rows, cols, data).expect("dims are positive")
}
