use crate::autodiff::{Graph, Var};
use crate::error::{Result, ThgError};
use crate::geometry::Curvature;
use crate::layers::{init_normal, CompatMode, EncoderConfig, EuclideanLinear, ModelKind, Module, ThgEncoder};
use crate::param::Param;
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::tensor::Tensor;

pub const N_LABELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig<T> {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub c: Curvature<T>,
    pub compat: CompatMode,
    pub scaled: bool,
    pub kind: ModelKind,
}

impl<T: Scalar> ModelConfig<T> {
    /// 60-wide single layer with 5 heads.
    pub fn new(vocab_size: usize, seq_len: usize) -> Self {
        Self {
            vocab_size,
            seq_len,
            d_model: 60,
            n_heads: 5,
            n_layers: 1,
            c: Curvature::unit(),
            compat: CompatMode::DotProduct,
            scaled: true,
            kind: ModelKind::Thg,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig<T> {
        EncoderConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            c: self.c,
            compat: self.compat,
            scaled: self.scaled,
            kind: self.kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(ThgError::Contract("n_layers must be >= 1".into()));
        }
        if self.vocab_size == 0 || self.seq_len == 0 {
            return Err(ThgError::Contract("vocab_size and seq_len must be positive".into()));
        }
        self.encoder_config().validate()
    }
}

/// Token + learned position embeddings, encoder stack and a per-token classifier.
#[derive(Debug, Clone)]
pub struct TaggerModel<T> {
    pub config: ModelConfig<T>,
    pub tok_emb: Param<T>,
    pub pos_emb: Param<T>,
    pub layers: Vec<ThgEncoder<T>>,
    pub classifier: EuclideanLinear<T>,
}

impl<T: Scalar> TaggerModel<T> {
    pub fn new(config: ModelConfig<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let std = 1.0 / (d as f64).sqrt();
        let layers = (0..config.n_layers)
            .map(|i| {
                let name = format!("encoder.{i}");
                ThgEncoder::new(&name, &config.encoder_config(), derive_seed(seed, &name))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tok_emb: Param::free("tok_emb", init_normal(config.vocab_size, d, std, derive_seed(seed, "tok_emb"))),
            pos_emb: Param::free("pos_emb", init_normal(config.seq_len, d, std, derive_seed(seed, "pos_emb"))),
            layers,
            classifier: EuclideanLinear::new("classifier", d, N_LABELS, derive_seed(seed, "classifier")),
            config,
        })
    }

    /// Logits `[batch·seq_len × N_LABELS]` for a batch of full-length sequences.
    pub fn forward(&self, g: &mut Graph<T>, batch: &[&[usize]]) -> Result<Var> {
        let n = self.config.seq_len;
        if batch.is_empty() {
            return Err(ThgError::Contract("empty batch".into()));
        }
        if let Some(bad) = batch.iter().find(|s| s.len() != n) {
            return Err(ThgError::Shape(format!("sequence of length {} for seq_len {n}", bad.len())));
        }
        let ids: Vec<usize> = batch.iter().flat_map(|s| s.iter().copied()).collect();
        let positions: Vec<usize> = (0..batch.len()).flat_map(|_| 0..n).collect();
        let tok = g.param(&self.tok_emb)?;
        let pos = g.param(&self.pos_emb)?;
        let te = g.gather_rows(tok, &ids)?;
        let pe = g.gather_rows(pos, &positions)?;
        let mut h = g.add(te, pe)?;
        for layer in &self.layers {
            h = layer.forward(g, h, n, None)?;
        }
        self.classifier.forward(g, h)
    }

    pub fn loss(&self, g: &mut Graph<T>, batch: &[&[usize]], labels: &[&[usize]]) -> Result<Var> {
        let logits = self.forward(g, batch)?;
        let targets: Vec<usize> = labels.iter().flat_map(|l| l.iter().copied()).collect();
        g.cross_entropy_with_logits(logits, &targets)
    }

    /// Argmax labels per sequence.
    pub fn predict(&self, batch: &[&[usize]]) -> Result<Vec<Vec<usize>>> {
        let mut g = Graph::new();
        let logits = self.forward(&mut g, batch)?;
        let lv = g.value(logits);
        let n = self.config.seq_len;
        Ok((0..batch.len())
            .map(|s| {
                (0..n)
                    .map(|i| {
                        let row = lv.row(s * n + i);
                        (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
                    })
                    .collect()
            })
            .collect())
    }

    pub fn ball_params(&self) -> Vec<&Param<T>> {
        self.params().into_iter().filter(|p| p.is_ball()).collect()
    }

    /// Overwrites parameter values by name; shapes must match exactly.
    pub fn load_tensors(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<()> {
        let mut params = self.params_mut();
        if tensors.len() != params.len() {
            return Err(ThgError::Shape(format!(
                "checkpoint holds {} tensors, model has {} parameters",
                tensors.len(),
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| ThgError::Shape(format!("checkpoint lacks tensor `{}`", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(ThgError::Shape(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
        }
        for p in params {
            let (_, t) = tensors.iter().find(|(n, _)| *n == p.name).expect("checked above");
            p.value = t.clone();
        }
        Ok(())
    }
}

impl<T> Module<T> for TaggerModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            v.extend(l.params());
        }
        v.extend(self.classifier.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        v.extend(self.classifier.params_mut());
        v
    }
}
