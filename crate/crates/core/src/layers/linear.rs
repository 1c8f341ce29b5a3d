use crate::autodiff::{Graph, Var};
use crate::error::{Result, ThgError};
use crate::geometry::Curvature;
use crate::layers::ball::{exp_map0_rows, log_map0_rows, mobius_add_rows};
use crate::layers::init::{init_kaiming, init_orthogonal, init_uniform};
use crate::param::Param;
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// Anything that owns trainable parameters.
pub trait Module<T> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

/// `y = x·wᵀ + b` with Kaiming weights and a uniform bias.
#[derive(Debug, Clone)]
pub struct EuclideanLinear<T> {
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Scalar> EuclideanLinear<T> {
    pub fn new(name: &str, d_in: usize, d_out: usize, seed: u64) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            w: Param::free(format!("{name}.w"), init_kaiming(d_out, d_in, derive_seed(seed, "w"))),
            b: Param::free(format!("{name}.b"), init_uniform(1, d_out, bound, derive_seed(seed, "b"))),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.value.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.value.rows()
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.w)?;
        let b = g.param(&self.b)?;
        let y = g.matmul_nt(x, w)?;
        g.add(y, b)
    }
}

impl<T> Module<T> for EuclideanLinear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.b]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// `y = log_0^c(exp_0^c(w·x) ⊕_c b)` with orthogonal `w` and a ball-valued `b`
/// starting at the origin.
#[derive(Debug, Clone)]
pub struct HyperbolicLinear<T> {
    pub w: Param<T>,
    pub b: Param<T>,
    pub c: Curvature<T>,
}

impl<T: Scalar> HyperbolicLinear<T> {
    pub fn new(name: &str, d_in: usize, d_out: usize, c: Curvature<T>, seed: u64) -> Self {
        Self {
            w: Param::free(format!("{name}.w"), init_orthogonal(d_out, d_in, derive_seed(seed, "w"))),
            b: Param::ball(format!("{name}.b"), Tensor::zeros(&[1, d_out]), c),
            c,
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.value.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.value.rows()
    }

    /// Replaces the ball bias; fails if it is not strictly inside the ball.
    pub fn set_bias(&mut self, b: &[T]) -> Result<()> {
        if b.len() != self.d_out() {
            return Err(ThgError::Shape(format!("bias of length {} for d_out {}", b.len(), self.d_out())));
        }
        let point = crate::geometry::BallPoint::new(b.to_vec(), self.c)?;
        self.b.value = Tensor::matrix(1, b.len(), point.into_coords())?;
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.w)?;
        let b = g.param(&self.b)?;
        let wx = g.matmul_nt(x, w)?;
        let e = exp_map0_rows(g, wx, self.c)?;
        let m = mobius_add_rows(g, e, b, self.c)?;
        log_map0_rows(g, m, self.c)
    }

    /// The point `exp_0^c(w·x) ⊕_c b` before the final logarithmic map.
    pub fn ball_output(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.w)?;
        let b = g.param(&self.b)?;
        let wx = g.matmul_nt(x, w)?;
        let e = exp_map0_rows(g, wx, self.c)?;
        mobius_add_rows(g, e, b, self.c)
    }
}

impl<T> Module<T> for HyperbolicLinear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.b]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Query/key projection: hyperbolic in THG, Euclidean in the baseline.
#[derive(Debug, Clone)]
pub enum Projection<T> {
    Hyperbolic(HyperbolicLinear<T>),
    Euclidean(EuclideanLinear<T>),
}

impl<T: Scalar> Projection<T> {
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        match self {
            Self::Hyperbolic(l) => l.forward(g, x),
            Self::Euclidean(l) => l.forward(g, x),
        }
    }

    pub fn as_hyperbolic(&self) -> Option<&HyperbolicLinear<T>> {
        match self {
            Self::Hyperbolic(l) => Some(l),
            Self::Euclidean(_) => None,
        }
    }

    pub fn as_hyperbolic_mut(&mut self) -> Option<&mut HyperbolicLinear<T>> {
        match self {
            Self::Hyperbolic(l) => Some(l),
            Self::Euclidean(_) => None,
        }
    }

    pub fn weight(&self) -> &Param<T> {
        match self {
            Self::Hyperbolic(l) => &l.w,
            Self::Euclidean(l) => &l.w,
        }
    }
}

impl<T> Module<T> for Projection<T> {
    fn params(&self) -> Vec<&Param<T>> {
        match self {
            Self::Hyperbolic(l) => l.params(),
            Self::Euclidean(l) => l.params(),
        }
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Self::Hyperbolic(l) => l.params_mut(),
            Self::Euclidean(l) => l.params_mut(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(name: &str, d: usize) -> Self {
        Self {
            gamma: Param::free(format!("{name}.gamma"), Tensor::full(&[1, d], T::one())),
            beta: Param::free(format!("{name}.beta"), Tensor::zeros(&[1, d])),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let gamma = g.param(&self.gamma)?;
        let beta = g.param(&self.beta)?;
        g.layer_norm(x, gamma, beta)
    }
}

impl<T> Module<T> for LayerNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
