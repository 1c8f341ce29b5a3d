//! Multi-head attention with hyperbolic query/key projections and the
//! post-norm encoder block around it.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Var};
use crate::error::{Result, ThgError};
use crate::geometry::Curvature;
use crate::layers::ball::{distance_rows, exp_map0_rows};
use crate::layers::linear::{EuclideanLinear, HyperbolicLinear, LayerNorm, Module, Projection};
use crate::param::Param;
use crate::scalar::{lit, Scalar};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// Additive score for masked key positions.
pub const MASK_SCORE: f64 = -1e9;

/// Query-key compatibility function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatMode {
    DotProduct,
    /// `-d_c(exp_0(q), exp_0(k))`; nearer pairs score higher.
    HyperbolicDistance,
}

impl fmt::Display for CompatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DotProduct => "dot_product",
            Self::HyperbolicDistance => "hyperbolic_distance",
        })
    }
}

impl FromStr for CompatMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dot_product" => Ok(Self::DotProduct),
            "hyperbolic_distance" => Ok(Self::HyperbolicDistance),
            _ => Err(format!("unknown compat mode `{s}` (dot_product | hyperbolic_distance)")),
        }
    }
}

/// Which projection family the query/key linears use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Thg,
    Euclidean,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Thg => "thg",
            Self::Euclidean => "euclidean",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "thg" => Ok(Self::Thg),
            "euclidean" => Ok(Self::Euclidean),
            _ => Err(format!("unknown model kind `{s}` (thg | euclidean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig<T> {
    pub d_model: usize,
    pub n_heads: usize,
    pub c: Curvature<T>,
    pub compat: CompatMode,
    /// Divide dot-product scores by `√d_k`.
    pub scaled: bool,
    pub kind: ModelKind,
}

impl<T: Scalar> EncoderConfig<T> {
    pub fn new(d_model: usize, n_heads: usize) -> Self {
        Self {
            d_model,
            n_heads,
            c: Curvature::unit(),
            compat: CompatMode::DotProduct,
            scaled: true,
            kind: ModelKind::Thg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 {
            return Err(ThgError::Contract("d_model and n_heads must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ThgError::Contract(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

/// One encoder block: attention sublayer then a 2×-wide ReLU FFN, each
/// wrapped in a residual connection followed by layer normalization.
#[derive(Debug, Clone)]
pub struct ThgEncoder<T> {
    pub q_proj: Projection<T>,
    pub k_proj: Projection<T>,
    pub v_proj: EuclideanLinear<T>,
    pub out_proj: EuclideanLinear<T>,
    pub ffn_in: EuclideanLinear<T>,
    pub ffn_out: EuclideanLinear<T>,
    pub norm1: LayerNorm<T>,
    pub norm2: LayerNorm<T>,
    pub n_heads: usize,
    pub c: Curvature<T>,
    pub compat: CompatMode,
    pub scaled: bool,
}

/// Attention output together with each sequence's per-head weight matrices.
pub struct AttentionTrace {
    pub output: Var,
    /// `weights[s][h]` is the `[seq×seq]` softmax of sequence `s`, head `h`.
    pub weights: Vec<Vec<Var>>,
}

impl<T: Scalar> ThgEncoder<T> {
    pub fn new(name: &str, cfg: &EncoderConfig<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let sub = |part: &str| derive_seed(seed, part);
        let proj = |part: &str| match cfg.kind {
            ModelKind::Thg => {
                Projection::Hyperbolic(HyperbolicLinear::new(&format!("{name}.{part}"), d, d, cfg.c, sub(part)))
            }
            ModelKind::Euclidean => {
                Projection::Euclidean(EuclideanLinear::new(&format!("{name}.{part}"), d, d, sub(part)))
            }
        };
        Ok(Self {
            q_proj: proj("q_proj"),
            k_proj: proj("k_proj"),
            v_proj: EuclideanLinear::new(&format!("{name}.v_proj"), d, d, sub("v_proj")),
            out_proj: EuclideanLinear::new(&format!("{name}.out_proj"), d, d, sub("out_proj")),
            ffn_in: EuclideanLinear::new(&format!("{name}.ffn_in"), d, 2 * d, sub("ffn_in")),
            ffn_out: EuclideanLinear::new(&format!("{name}.ffn_out"), 2 * d, d, sub("ffn_out")),
            norm1: LayerNorm::new(&format!("{name}.norm1"), d),
            norm2: LayerNorm::new(&format!("{name}.norm2"), d),
            n_heads: cfg.n_heads,
            c: cfg.c,
            compat: cfg.compat,
            scaled: cfg.scaled,
        })
    }

    pub fn d_model(&self) -> usize {
        self.v_proj.d_in()
    }

    pub fn d_head(&self) -> usize {
        self.d_model() / self.n_heads
    }

    /// Multi-head attention over a batch of equal-length sequences stacked
    /// row-wise in `x` (`[batch·seq_len × d_model]`).
    ///
    /// `mask[j] == true` excludes key position `j` in every sequence.
    pub fn attention(&self, g: &mut Graph<T>, x: Var, seq_len: usize, mask: Option<&[bool]>) -> Result<Var> {
        Ok(self.attention_trace(g, x, seq_len, mask)?.output)
    }

    pub fn attention_trace(
        &self,
        g: &mut Graph<T>,
        x: Var,
        seq_len: usize,
        mask: Option<&[bool]>,
    ) -> Result<AttentionTrace> {
        let (rows, d) = g.value(x).dims2()?;
        if d != self.d_model() {
            return Err(ThgError::Shape(format!("input width {d}, model width {}", self.d_model())));
        }
        if seq_len == 0 || rows % seq_len != 0 {
            return Err(ThgError::Shape(format!("{rows} rows do not split into sequences of {seq_len}")));
        }
        let mask_bias = match mask {
            Some(m) if m.len() != seq_len => {
                return Err(ThgError::Shape(format!("mask length {} for sequence length {seq_len}", m.len())))
            }
            Some(m) => {
                let bias = m.iter().map(|&masked| if masked { lit(MASK_SCORE) } else { T::zero() }).collect();
                Some(g.constant(Tensor::matrix(1, seq_len, bias)?)?)
            }
            None => None,
        };

        let q = self.q_proj.forward(g, x)?;
        let k = self.k_proj.forward(g, x)?;
        let v = self.v_proj.forward(g, x)?;
        let dk = self.d_head();
        let score_scale: T = if self.scaled { T::one() / lit::<T>(dk as f64).sqrt() } else { T::one() };

        let mut heads_q = Vec::with_capacity(self.n_heads);
        let mut heads_k = Vec::with_capacity(self.n_heads);
        let mut heads_v = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (qh, kh) = (g.slice_cols(q, h * dk, dk)?, g.slice_cols(k, h * dk, dk)?);
            let (qh, kh) = match self.compat {
                CompatMode::DotProduct => (qh, kh),
                CompatMode::HyperbolicDistance => (exp_map0_rows(g, qh, self.c)?, exp_map0_rows(g, kh, self.c)?),
            };
            heads_q.push(qh);
            heads_k.push(kh);
            heads_v.push(g.slice_cols(v, h * dk, dk)?);
        }

        let n_seq = rows / seq_len;
        let (pair_i, pair_j): (Vec<usize>, Vec<usize>) =
            (0..seq_len).flat_map(|i| (0..seq_len).map(move |j| (i, j))).unzip();
        let mut outputs = Vec::with_capacity(n_seq);
        let mut weights = Vec::with_capacity(n_seq);
        for s in 0..n_seq {
            let mut head_out = Vec::with_capacity(self.n_heads);
            let mut head_w = Vec::with_capacity(self.n_heads);
            for h in 0..self.n_heads {
                let qs = g.slice_rows(heads_q[h], s * seq_len, seq_len)?;
                let ks = g.slice_rows(heads_k[h], s * seq_len, seq_len)?;
                let vs = g.slice_rows(heads_v[h], s * seq_len, seq_len)?;
                let scores = match self.compat {
                    CompatMode::DotProduct => {
                        let raw = g.matmul_nt(qs, ks)?;
                        if self.scaled {
                            g.scale(raw, score_scale)?
                        } else {
                            raw
                        }
                    }
                    CompatMode::HyperbolicDistance => {
                        let qi = g.gather_rows(qs, &pair_i)?;
                        let kj = g.gather_rows(ks, &pair_j)?;
                        let dist = distance_rows(g, qi, kj, self.c)?;
                        let dist = g.reshape(dist, seq_len, seq_len)?;
                        g.neg(dist)?
                    }
                };
                let scores = match mask_bias {
                    Some(b) => g.add(scores, b)?,
                    None => scores,
                };
                let w = g.softmax_rows(scores)?;
                head_out.push(g.matmul(w, vs)?);
                head_w.push(w);
            }
            outputs.push(g.concat_cols(&head_out)?);
            weights.push(head_w);
        }
        let joined = if outputs.len() == 1 { outputs[0] } else { g.concat_rows(&outputs)? };
        let output = self.out_proj.forward(g, joined)?;
        Ok(AttentionTrace { output, weights })
    }

    /// `y1 = LN(x + attn(x))`, `y2 = LN(y1 + ffn(y1))`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, seq_len: usize, mask: Option<&[bool]>) -> Result<Var> {
        let a = self.attention(g, x, seq_len, mask)?;
        let r1 = g.add(x, a)?;
        let y1 = self.norm1.forward(g, r1)?;
        let f = self.ffn_in.forward(g, y1)?;
        let f = g.relu(f)?;
        let f = self.ffn_out.forward(g, f)?;
        let r2 = g.add(y1, f)?;
        self.norm2.forward(g, r2)
    }

    /// Ball-constrained biases of the query and key projections.
    pub fn ball_params(&self) -> Vec<&Param<T>> {
        self.params().into_iter().filter(|p| p.is_ball()).collect()
    }
}

impl<T> Module<T> for ThgEncoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.q_proj.params();
        v.extend(self.k_proj.params());
        v.extend(self.v_proj.params());
        v.extend(self.out_proj.params());
        v.extend(self.ffn_in.params());
        v.extend(self.ffn_out.params());
        v.extend(self.norm1.params());
        v.extend(self.norm2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.q_proj.params_mut();
        v.extend(self.k_proj.params_mut());
        v.extend(self.v_proj.params_mut());
        v.extend(self.out_proj.params_mut());
        v.extend(self.ffn_in.params_mut());
        v.extend(self.ffn_out.params_mut());
        v.extend(self.norm1.params_mut());
        v.extend(self.norm2.params_mut());
        v
    }
}
