//! Define-by-run reverse-mode differentiation over rank-2 tensors.
//!
//! Every primitive appends a node holding its forward value and whatever it
//! needs for the backward rule. Nodes are created in topological order, so
//! the backward sweep is a reverse scan of the node list.

use std::collections::HashMap;

use crate::error::{Result, ThgError};
use crate::geometry::NORM_EPS;
use crate::param::Param;
use crate::scalar::{lit, Scalar};
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// `arctanh` refuses arguments with magnitude at or beyond this.
pub const ATANH_LIMIT: f64 = 1.0 - 1e-12;
/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Below this the ratio functions switch to their Taylor series.
const RATIO_SERIES_CUTOFF: f64 = 1e-3;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    /// Elementwise map with its derivative evaluated at the input.
    Map(Var, Tensor<T>),
    L2Norm(Var),
    RowNorm(Var),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    ClipRows {
        x: Var,
        max: T,
        norms: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// A differentiation tape. Build one per forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<String, Var>,
    param_order: Vec<String>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn bdim(a: usize, b: usize) -> Option<usize> {
    if a == b {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else if b == 1 {
        Some(a)
    } else {
        None
    }
}

fn broadcast_zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (r, c) = match (bdim(ar, br), bdim(ac, bc)) {
        (Some(r), Some(c)) => (r, c),
        _ => return Err(ThgError::Shape(format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()))),
    };
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if ar == 1 { 0 } else { i * ac };
        let ib = if br == 1 { 0 } else { i * bc };
        for j in 0..c {
            let x = ad[ia + if ac == 1 { 0 } else { j }];
            let y = bd[ib + if bc == 1 { 0 } else { j }];
            out.push(f(x, y));
        }
    }
    Tensor::matrix(r, c, out)
}

/// Sums `g` over the axes along which `target` was broadcast.
fn reduce_to<T: Scalar>(g: Tensor<T>, target: &[usize]) -> Tensor<T> {
    if g.shape() == target {
        return g;
    }
    let (r, c) = (g.rows(), g.cols());
    let (tr, tc) = (target[0], target[1]);
    let mut out = vec![T::zero(); tr * tc];
    for i in 0..r {
        let oi = if tr == 1 { 0 } else { i };
        for j in 0..c {
            let oj = if tc == 1 { 0 } else { j };
            out[oi * tc + oj] = out[oi * tc + oj] + g.data()[i * c + j];
        }
    }
    Tensor::matrix(tr, tc, out).expect("reduced shape is valid")
}

fn tanh_ratio<T: Scalar>(s: T) -> (T, T) {
    if s.abs() < lit(RATIO_SERIES_CUTOFF) {
        let s2 = s * s;
        let v =
            T::one() - s2 / lit(3.0) + lit::<T>(2.0) * s2 * s2 / lit(15.0) - lit::<T>(17.0) * s2 * s2 * s2 / lit(315.0);
        let d =
            s * (lit::<T>(-2.0) / lit(3.0) + lit::<T>(8.0) * s2 / lit(15.0) - lit::<T>(102.0) * s2 * s2 / lit(315.0));
        (v, d)
    } else {
        let t = s.tanh();
        let sech2 = T::one() - t * t;
        (t / s, (s * sech2 - t) / (s * s))
    }
}

fn atanh_ratio<T: Scalar>(s: T) -> (T, T) {
    if s.abs() < lit(RATIO_SERIES_CUTOFF) {
        let s2 = s * s;
        let v = T::one() + s2 / lit(3.0) + s2 * s2 / lit(5.0) + s2 * s2 * s2 / lit(7.0);
        let d = s * (lit::<T>(2.0) / lit(3.0) + lit::<T>(4.0) * s2 / lit(5.0) + lit::<T>(6.0) * s2 * s2 / lit(7.0));
        (v, d)
    } else {
        let a = s.atanh();
        (a / s, (s / (T::one() - s * s) - a) / (s * s))
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), params: HashMap::new(), param_order: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of the last `backward` calls, if the node was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(ThgError::NonFinite(name));
        }
        self.nodes.push(Node { value, op, needs_grad });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn leaf(&mut self, t: Tensor<T>, needs_grad: bool) -> Result<Var> {
        t.dims2()?;
        self.push(t, Op::Leaf, needs_grad, "leaf")
    }

    /// Differentiable input.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.leaf(t, true)
    }

    /// Non-differentiable input (data, masks).
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.leaf(t, false)
    }

    /// Binds a trainable parameter; repeated binds of one name share a node.
    pub fn param(&mut self, p: &Param<T>) -> Result<Var> {
        if let Some(&v) = self.params.get(&p.name) {
            return Ok(v);
        }
        let v = self.leaf(p.value.clone(), true)?;
        self.params.insert(p.name.clone(), v);
        self.param_order.push(p.name.clone());
        Ok(v)
    }

    /// Routes later binds of `name` to `v`, so a parameter can be driven by
    /// an input (used for finite-difference checks over weights).
    pub fn bind_param(&mut self, name: &str, v: Var) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(ThgError::Contract(format!("parameter `{name}` is already bound")));
        }
        self.params.insert(name.to_string(), v);
        self.param_order.push(name.to_string());
        Ok(())
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    /// Gradients of every bound parameter, in binding order. Unreached
    /// parameters report a zero gradient.
    pub fn param_grads(&self) -> Vec<(String, Tensor<T>)> {
        self.param_order
            .iter()
            .map(|name| {
                let v = self.params[name];
                let g = self.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
                (name.clone(), g)
            })
            .collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng, "matmul")
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.value(a).dims2()?;
        let (m, k2) = self.value(b).dims2()?;
        if k != k2 {
            return Err(ThgError::Shape(format!("matmul_nt {n}x{k} by ({m}x{k2})ᵀ")));
        }
        let mut out = vec![T::zero(); n * m];
        gemm_nt_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let ng = self.ng(&[a, b]);
        self.push(Tensor::matrix(n, m, out)?, Op::MatMulNT(a, b), ng, "matmul_nt")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = broadcast_zip(self.value(a), self.value(b), |x, y| x + y)?;
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Add(a, b), ng, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = broadcast_zip(self.value(a), self.value(b), |x, y| x - y)?;
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Sub(a, b), ng, "sub")
    }

    /// Elementwise (Hadamard) product with row/column broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = broadcast_zip(self.value(a), self.value(b), |x, y| x * y)?;
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Mul(a, b), ng, "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = broadcast_zip(self.value(a), self.value(b), |x, y| x / y)?;
        let ng = self.ng(&[a, b]);
        self.push(out, Op::Div(a, b), ng, "div")
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(&[a]);
        self.push(out, Op::Scale(a, s), ng, "scale")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -T::one())
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        let ng = self.ng(&[a]);
        self.push(out, Op::AddScalar(a), ng, "add_scalar")
    }

    /// Elementwise `f` with derivative `df`. Backs the named unary primitives
    /// and lets callers plug in their own.
    pub fn map_unary(&mut self, a: Var, f: impl Fn(T) -> T, df: impl Fn(T) -> T, name: &'static str) -> Result<Var> {
        let x = self.value(a);
        let out = x.map(&f);
        let deriv = x.map(&df);
        let ng = self.ng(&[a]);
        self.push(out, Op::Map(a, deriv), ng, name)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map_unary(a, |x| x.tanh(), |x| T::one() - x.tanh() * x.tanh(), "tanh")
    }

    pub fn atanh(&mut self, a: Var) -> Result<Var> {
        self.check_atanh_domain(a)?;
        self.map_unary(a, |x| x.atanh(), |x| T::one() / (T::one() - x * x), "atanh")
    }

    fn check_atanh_domain(&self, a: Var) -> Result<()> {
        let lim: T = lit(ATANH_LIMIT);
        if let Some(bad) = self.value(a).data().iter().find(|x| x.abs() >= lim) {
            return Err(ThgError::Domain(format!("arctanh argument {bad} outside (-1, 1)")));
        }
        Ok(())
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map_unary(
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |x| if x > T::zero() { T::one() } else { T::zero() },
            "relu",
        )
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= T::zero()) {
            return Err(ThgError::Domain("sqrt of non-positive value".into()));
        }
        self.map_unary(a, |x| x.sqrt(), |x| lit::<T>(0.5) / x.sqrt(), "sqrt")
    }

    /// `tanh(s)/s`, equal to 1 at `s = 0`.
    pub fn tanh_ratio(&mut self, a: Var) -> Result<Var> {
        self.map_unary(a, |s| tanh_ratio(s).0, |s| tanh_ratio(s).1, "tanh_ratio")
    }

    /// `arctanh(s)/s`, equal to 1 at `s = 0`.
    pub fn atanh_ratio(&mut self, a: Var) -> Result<Var> {
        self.check_atanh_domain(a)?;
        self.map_unary(a, |s| atanh_ratio(s).0, |s| atanh_ratio(s).1, "atanh_ratio")
    }

    /// Frobenius norm of the whole tensor, as a 1×1 node.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).data().iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(n), Op::L2Norm(a), ng, "l2_norm")
    }

    /// Per-row Euclidean norm, `[n×d] -> [n×1]`.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, _) = x.dims2()?;
        let out: Vec<T> = (0..r).map(|i| x.row(i).iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()).collect();
        let ng = self.ng(&[a]);
        self.push(Tensor::matrix(r, 1, out)?, Op::RowNorm(a), ng, "row_norm")
    }

    /// Per-row sum, `[n×d] -> [n×1]`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, _) = x.dims2()?;
        let out: Vec<T> = (0..r).map(|i| x.row(i).iter().copied().sum()).collect();
        let ng = self.ng(&[a]);
        self.push(Tensor::matrix(r, 1, out)?, Op::RowSum(a), ng, "row_sum")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let s: T = x.data().iter().copied().sum::<T>() / lit(x.len() as f64);
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), ng, "mean")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = x.row(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = out.len();
            let mut z = T::zero();
            for &v in row {
                let e = (v - m).exp();
                z = z + e;
                out.push(e);
            }
            out[start..].iter_mut().for_each(|e| *e = *e / z);
        }
        let ng = self.ng(&[a]);
        self.push(Tensor::matrix(r, c, out)?, Op::SoftmaxRows(a), ng, "softmax")
    }

    /// Row-wise layer normalization with gain `gamma` and shift `beta` (both `[1×d]`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, d) = xv.dims2()?;
        if self.value(gamma).shape() != [1, d] || self.value(beta).shape() != [1, d] {
            return Err(ThgError::Shape(format!("layer_norm parameters must be [1, {d}]")));
        }
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let eps: T = lit(LAYER_NORM_EPS);
        let dn: T = lit(d as f64);
        let mut xhat = Vec::with_capacity(r * d);
        let mut out = Vec::with_capacity(r * d);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row(i);
            let mu = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().fold(T::zero(), |acc, &v| acc + (v - mu) * (v - mu)) / dn;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mu) * inv;
                xhat.push(h);
                out.push(h * gv[j] + bv[j]);
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        let xhat = Tensor::matrix(r, d, xhat)?;
        self.push(Tensor::matrix(r, d, out)?, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, ng, "layer_norm")
    }

    /// Mean softmax cross-entropy of `logits [n×k]` against class indices.
    pub fn cross_entropy_with_logits(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (n, k) = x.dims2()?;
        if targets.len() != n {
            return Err(ThgError::Shape(format!("{} targets for {n} rows", targets.len())));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(ThgError::Contract(format!("target class {t} >= {k}")));
        }
        let mut probs = Vec::with_capacity(n * k);
        let mut loss = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = x.row(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + z.ln();
            loss = loss + lse - row[t];
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        loss = loss / lit(n as f64);
        let ng = self.ng(&[logits]);
        let probs = Tensor::matrix(n, k, probs)?;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
            ng,
            "cross_entropy",
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| ThgError::Contract("concat of nothing".into()))?;
        let rows = self.value(*first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(ThgError::Shape(format!("concat_cols rows {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = self.ng(parts);
        self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec()), ng, "concat")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| ThgError::Contract("concat of nothing".into()))?;
        let cols = self.value(*first).dims2()?.1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if c != cols {
                return Err(ThgError::Shape(format!("concat_rows cols {c} vs {cols}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let ng = self.ng(parts);
        self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec()), ng, "concat")
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        if width == 0 || start + width > c {
            return Err(ThgError::Shape(format!("column slice {start}+{width} of {c}")));
        }
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&x.row(i)[start..start + width]);
        }
        let ng = self.ng(&[a]);
        self.push(Tensor::matrix(r, width, out)?, Op::SliceCols(a, start), ng, "slice")
    }

    /// Rows `start..start + count`.
    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        if count == 0 || start + count > r {
            return Err(ThgError::Shape(format!("row slice {start}+{count} of {r}")));
        }
        let out = x.data()[start * c..(start + count) * c].to_vec();
        let ng = self.ng(&[a]);
        self.push(Tensor::matrix(count, c, out)?, Op::SliceRows(a, start), ng, "slice")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let ng = self.ng(&[a]);
        self.push(out, Op::Transpose(a), ng, "transpose")
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshape(vec![rows, cols])?;
        let ng = self.ng(&[a]);
        self.push(out, Op::Reshape(a), ng, "reshape")
    }

    /// `out[i] = table[idx[i]]`; the embedding lookup.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (r, c) = t.dims2()?;
        if idx.is_empty() {
            return Err(ThgError::Shape("gather of zero rows".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(ThgError::Shape(format!("row index {i} out of {r}")));
            }
            out.extend_from_slice(t.row(i));
        }
        let ng = self.ng(&[table]);
        self.push(Tensor::matrix(idx.len(), c, out)?, Op::GatherRows(table, idx.to_vec()), ng, "gather")
    }

    /// Radially rescales every row whose norm exceeds `max` onto norm `max`.
    pub fn clip_rows(&mut self, a: Var, max: T) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        let mut norms = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = x.row(i);
            let n = row.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
            norms.push(n);
            if n > max {
                let s = max / n;
                out.extend(row.iter().map(|&v| v * s));
            } else {
                out.extend_from_slice(row);
            }
        }
        let ng = self.ng(&[a]);
        self.push(Tensor::matrix(r, c, out)?, Op::ClipRows { x: a, max, norms }, ng, "clip_rows")
    }

    /// Reverse sweep from a scalar `loss` with unit seed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.backward_with_seed(loss, T::one())
    }

    /// Reverse sweep seeded with `seed · ∂loss/∂loss`. Gradients add onto
    /// whatever earlier sweeps left behind.
    pub fn backward_with_seed(&mut self, loss: Var, seed: T) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(ThgError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::full(self.value(loss).shape(), seed));

        for i in (0..=loss.0).rev() {
            let Some(up) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            for (parent, g) in self.local_grads(i, &up)? {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a = *a + b),
                    slot => *slot = Some(g),
                }
            }
            let slot = &mut self.grads[i];
            match slot {
                Some(acc) => acc.data_mut().iter_mut().zip(up.data()).for_each(|(a, &b)| *a = *a + b),
                None => *slot = Some(up),
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, up: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let zip = |a: &Tensor<T>, b: &Tensor<T>, f: &dyn Fn(T, T) -> T| broadcast_zip(a, b, f);
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (n, k) = val(*a).dims2()?;
                let m = val(*b).cols();
                let mut ga = vec![T::zero(); n * k];
                gemm_nt_acc(up.data(), val(*b).data(), &mut ga, n, m, k);
                let mut gb = vec![T::zero(); k * m];
                gemm_tn_acc(val(*a).data(), up.data(), &mut gb, k, n, m);
                vec![(*a, Tensor::matrix(n, k, ga)?), (*b, Tensor::matrix(k, m, gb)?)]
            }
            Op::MatMulNT(a, b) => {
                let (n, k) = val(*a).dims2()?;
                let m = val(*b).rows();
                let mut ga = vec![T::zero(); n * k];
                gemm_acc(up.data(), val(*b).data(), &mut ga, n, m, k);
                let mut gb = vec![T::zero(); m * k];
                gemm_tn_acc(up.data(), val(*a).data(), &mut gb, m, n, k);
                vec![(*a, Tensor::matrix(n, k, ga)?), (*b, Tensor::matrix(m, k, gb)?)]
            }
            Op::Add(a, b) => {
                vec![(*a, reduce_to(up.clone(), val(*a).shape())), (*b, reduce_to(up.clone(), val(*b).shape()))]
            }
            Op::Sub(a, b) => {
                vec![(*a, reduce_to(up.clone(), val(*a).shape())), (*b, reduce_to(up.map(|x| -x), val(*b).shape()))]
            }
            Op::Mul(a, b) => {
                let ga = zip(up, val(*b), &|u, y| u * y)?;
                let gb = zip(up, val(*a), &|u, x| u * x)?;
                vec![(*a, reduce_to(ga, val(*a).shape())), (*b, reduce_to(gb, val(*b).shape()))]
            }
            Op::Div(a, b) => {
                let ga = zip(up, val(*b), &|u, y| u / y)?;
                // d(a/b)/db = -out/b
                let t = zip(up, &node.value, &|u, o| -u * o)?;
                let gb = zip(&t, val(*b), &|t, y| t / y)?;
                vec![(*a, reduce_to(ga, val(*a).shape())), (*b, reduce_to(gb, val(*b).shape()))]
            }
            Op::Scale(a, s) => {
                let s = *s;
                vec![(*a, up.map(|u| u * s))]
            }
            Op::AddScalar(a) => vec![(*a, up.clone())],
            Op::Map(a, deriv) => {
                let g = up.data().iter().zip(deriv.data()).map(|(&u, &d)| u * d).collect();
                vec![(*a, Tensor::new(up.shape().to_vec(), g)?)]
            }
            Op::L2Norm(a) => {
                let n = node.value.data()[0];
                let u = up.data()[0];
                let g = if n < lit(NORM_EPS) { Tensor::zeros(val(*a).shape()) } else { val(*a).map(|x| u * x / n) };
                vec![(*a, g)]
            }
            Op::RowNorm(a) => {
                let x = val(*a);
                let (r, c) = x.dims2()?;
                let mut g = vec![T::zero(); r * c];
                for i in 0..r {
                    let n = node.value.data()[i];
                    if n < lit(NORM_EPS) {
                        continue;
                    }
                    let s = up.data()[i] / n;
                    for j in 0..c {
                        g[i * c + j] = s * x.data()[i * c + j];
                    }
                }
                vec![(*a, Tensor::matrix(r, c, g)?)]
            }
            Op::RowSum(a) => {
                let (r, c) = val(*a).dims2()?;
                let g = (0..r * c).map(|k| up.data()[k / c]).collect();
                vec![(*a, Tensor::matrix(r, c, g)?)]
            }
            Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), up.data()[0]))],
            Op::Mean(a) => {
                let n: T = lit(val(*a).len() as f64);
                vec![(*a, Tensor::full(val(*a).shape(), up.data()[0] / n))]
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let (r, c) = y.dims2()?;
                let mut g = vec![T::zero(); r * c];
                for i in 0..r {
                    let yr = y.row(i);
                    let ur = &up.data()[i * c..(i + 1) * c];
                    let dotp = yr.iter().zip(ur).fold(T::zero(), |acc, (&p, &u)| acc + p * u);
                    for j in 0..c {
                        g[i * c + j] = yr[j] * (ur[j] - dotp);
                    }
                }
                vec![(*a, Tensor::matrix(r, c, g)?)]
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (r, d) = xhat.dims2()?;
                let gv = val(*gamma).data();
                let dn: T = lit(d as f64);
                let mut gx = vec![T::zero(); r * d];
                let mut gg = vec![T::zero(); d];
                let mut gb = vec![T::zero(); d];
                for i in 0..r {
                    let hr = xhat.row(i);
                    let ur = &up.data()[i * d..(i + 1) * d];
                    let mut s1 = T::zero();
                    let mut s2 = T::zero();
                    for j in 0..d {
                        gg[j] = gg[j] + ur[j] * hr[j];
                        gb[j] = gb[j] + ur[j];
                        let gh = ur[j] * gv[j];
                        s1 = s1 + gh;
                        s2 = s2 + gh * hr[j];
                    }
                    let inv = inv_std[i];
                    for j in 0..d {
                        let gh = ur[j] * gv[j];
                        gx[i * d + j] = inv / dn * (dn * gh - s1 - hr[j] * s2);
                    }
                }
                vec![
                    (*x, Tensor::matrix(r, d, gx)?),
                    (*gamma, Tensor::matrix(1, d, gg)?),
                    (*beta, Tensor::matrix(1, d, gb)?),
                ]
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let (n, k) = probs.dims2()?;
                let s = up.data()[0] / lit(n as f64);
                let mut g: Vec<T> = probs.data().iter().map(|&p| p * s).collect();
                for (i, &t) in targets.iter().enumerate() {
                    g[i * k + t] = g[i * k + t] - s;
                }
                vec![(*logits, Tensor::matrix(n, k, g)?)]
            }
            Op::ConcatCols(parts) => {
                let (r, total) = up.dims2()?;
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = val(p).cols();
                    let mut g = Vec::with_capacity(r * w);
                    for i in 0..r {
                        g.extend_from_slice(&up.data()[i * total + offset..i * total + offset + w]);
                    }
                    offset += w;
                    res.push((p, Tensor::matrix(r, w, g)?));
                }
                res
            }
            Op::ConcatRows(parts) => {
                let c = up.cols();
                let mut start = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &p in parts {
                    let r = val(p).rows();
                    res.push((p, Tensor::matrix(r, c, up.data()[start * c..(start + r) * c].to_vec())?));
                    start += r;
                }
                res
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).dims2()?;
                let w = up.cols();
                let mut g = vec![T::zero(); r * c];
                for i in 0..r {
                    g[i * c + start..i * c + start + w].copy_from_slice(&up.data()[i * w..(i + 1) * w]);
                }
                vec![(*a, Tensor::matrix(r, c, g)?)]
            }
            Op::SliceRows(a, start) => {
                let (r, c) = val(*a).dims2()?;
                let mut g = vec![T::zero(); r * c];
                g[start * c..start * c + up.len()].copy_from_slice(up.data());
                vec![(*a, Tensor::matrix(r, c, g)?)]
            }
            Op::Transpose(a) => vec![(*a, up.transpose()?)],
            Op::Reshape(a) => vec![(*a, up.clone().reshape(val(*a).shape().to_vec())?)],
            Op::GatherRows(table, idx) => {
                let (r, c) = val(*table).dims2()?;
                let mut g = vec![T::zero(); r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        g[i * c + j] = g[i * c + j] + up.data()[k * c + j];
                    }
                }
                vec![(*table, Tensor::matrix(r, c, g)?)]
            }
            Op::ClipRows { x, max, norms } => {
                let xv = val(*x);
                let (r, c) = xv.dims2()?;
                let mut g = up.data().to_vec();
                for i in 0..r {
                    let n = norms[i];
                    if n <= *max {
                        continue;
                    }
                    // d(max·x/‖x‖) = (max/‖x‖)(I - x̂x̂ᵀ)
                    let xr = xv.row(i);
                    let ur = &up.data()[i * c..(i + 1) * c];
                    let proj = xr.iter().zip(ur).fold(T::zero(), |acc, (&a, &b)| acc + a * b) / (n * n);
                    let s = *max / n;
                    for j in 0..c {
                        g[i * c + j] = s * (ur[j] - xr[j] * proj);
                    }
                }
                vec![(*x, Tensor::matrix(r, c, g)?)]
            }
        })
    }
}
