//! Flat `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys take their defaults. Unknown or repeated keys are
//! errors. [`RunConfig::to_resolved`] writes every key back out, so a
//! resolved file reproduces the run exactly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thg_core::geometry::Curvature;
use thg_core::layers::{CompatMode, ModelKind};
use thg_core::optim::{OptimConfig, OptimizerKind};
use thg_core::seed::derive_seed;
use thg_core::tasks::{DatasetConfig, ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub curvature: f64,
    pub compat_mode: CompatMode,
    pub attention_scaling: bool,
    pub model_kind: ModelKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimSection {
    pub kind: OptimizerKind,
    /// `None` means the optimizer's default rate.
    pub lr: Option<f64>,
    pub riemannian_rescale: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub alpha: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSection {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub steps: usize,
    pub eval_interval: usize,
    pub batch_size: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub optim: OptimSection,
    pub task: TaskSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection {
                d_model: 60,
                n_heads: 5,
                n_layers: 1,
                curvature: 1.0,
                compat_mode: CompatMode::DotProduct,
                attention_scaling: true,
                model_kind: ModelKind::Thg,
            },
            optim: OptimSection {
                kind: OptimizerKind::Adam,
                lr: None,
                riemannian_rescale: true,
                beta1: 0.9,
                beta2: 0.999,
                alpha: 0.99,
                eps: 1e-8,
            },
            task: TaskSection { vocab_size: 32, seq_len: 32, n_train: 4000, n_eval: 500, seed: 0 },
            run: RunSection { steps: 2000, eval_interval: 100, batch_size: 16, out_dir: PathBuf::from("runs/default") },
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on|off, got `{v}`")),
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |msg: String| format!("line {}: {msg}", i + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| at("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(|e| at(format!("{key}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let (m, o, t, r) = (&mut self.model, &mut self.optim, &mut self.task, &mut self.run);
        match key {
            "model.d_model" => m.d_model = parse_num(v)?,
            "model.n_heads" => m.n_heads = parse_num(v)?,
            "model.n_layers" => m.n_layers = parse_num(v)?,
            "model.curvature" => m.curvature = parse_num(v)?,
            "model.compat_mode" => m.compat_mode = v.parse()?,
            "model.attention_scaling" => m.attention_scaling = parse_bool(v)?,
            "model.model_kind" => m.model_kind = v.parse()?,
            "optim.kind" => o.kind = v.parse()?,
            "optim.lr" => o.lr = Some(parse_num(v)?),
            "optim.riemannian_rescale" => o.riemannian_rescale = parse_bool(v)?,
            "optim.beta1" => o.beta1 = parse_num(v)?,
            "optim.beta2" => o.beta2 = parse_num(v)?,
            "optim.alpha" => o.alpha = parse_num(v)?,
            "optim.eps" => o.eps = parse_num(v)?,
            "task.vocab_size" => t.vocab_size = parse_num(v)?,
            "task.seq_len" => t.seq_len = parse_num(v)?,
            "task.n_train" => t.n_train = parse_num(v)?,
            "task.n_eval" => t.n_eval = parse_num(v)?,
            "task.seed" => t.seed = parse_num(v)?,
            "run.steps" => r.steps = parse_num(v)?,
            "run.eval_interval" => r.eval_interval = parse_num(v)?,
            "run.batch_size" => r.batch_size = parse_num(v)?,
            "run.out_dir" => r.out_dir = PathBuf::from(v),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let m = &self.model;
        if m.d_model == 0 || m.n_heads == 0 || m.n_layers == 0 {
            return Err("model.d_model, model.n_heads and model.n_layers must be positive".into());
        }
        if !m.d_model.is_multiple_of(m.n_heads) {
            return Err(format!("model.d_model {} is not divisible by model.n_heads {}", m.d_model, m.n_heads));
        }
        if !(m.curvature.is_finite() && m.curvature > 0.0) {
            return Err(format!("model.curvature must be > 0, got {}", m.curvature));
        }
        let o = &self.optim;
        if let Some(lr) = o.lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(format!("optim.lr must be > 0, got {lr}"));
            }
        }
        for (name, v) in [("optim.beta1", o.beta1), ("optim.beta2", o.beta2), ("optim.alpha", o.alpha)] {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(o.eps.is_finite() && o.eps > 0.0) {
            return Err(format!("optim.eps must be > 0, got {}", o.eps));
        }
        let t = &self.task;
        if t.seq_len < 4 || t.vocab_size < 4 {
            return Err("task.seq_len and task.vocab_size must be >= 4".into());
        }
        if t.n_train == 0 || t.n_eval == 0 {
            return Err("task.n_train and task.n_eval must be positive".into());
        }
        let r = &self.run;
        if r.eval_interval == 0 || r.batch_size == 0 {
            return Err("run.eval_interval and run.batch_size must be positive".into());
        }
        Ok(())
    }

    pub fn lr(&self) -> f64 {
        self.optim.lr.unwrap_or_else(|| self.optim.kind.default_lr())
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_resolved(&self) -> String {
        let (m, o, t, r) = (&self.model, &self.optim, &self.task, &self.run);
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model.d_model", m.d_model.to_string());
        kv("model.n_heads", m.n_heads.to_string());
        kv("model.n_layers", m.n_layers.to_string());
        kv("model.curvature", m.curvature.to_string());
        kv("model.compat_mode", m.compat_mode.to_string());
        kv("model.attention_scaling", on_off(m.attention_scaling).into());
        kv("model.model_kind", m.model_kind.to_string());
        kv("optim.kind", o.kind.to_string());
        kv("optim.lr", self.lr().to_string());
        kv("optim.riemannian_rescale", on_off(o.riemannian_rescale).into());
        kv("optim.beta1", o.beta1.to_string());
        kv("optim.beta2", o.beta2.to_string());
        kv("optim.alpha", o.alpha.to_string());
        kv("optim.eps", o.eps.to_string());
        kv("task.vocab_size", t.vocab_size.to_string());
        kv("task.seq_len", t.seq_len.to_string());
        kv("task.n_train", t.n_train.to_string());
        kv("task.n_eval", t.n_eval.to_string());
        kv("task.seed", t.seed.to_string());
        kv("run.steps", r.steps.to_string());
        kv("run.eval_interval", r.eval_interval.to_string());
        kv("run.batch_size", r.batch_size.to_string());
        kv("run.out_dir", r.out_dir.display().to_string());
        s
    }

    pub fn model_config(&self) -> ModelConfig<f64> {
        let m = &self.model;
        ModelConfig {
            vocab_size: self.task.vocab_size,
            seq_len: self.task.seq_len,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            c: Curvature::new(m.curvature).expect("validated"),
            compat: m.compat_mode,
            scaled: m.attention_scaling,
            kind: m.model_kind,
        }
    }

    pub fn optim_config(&self) -> OptimConfig<f64> {
        let o = &self.optim;
        OptimConfig {
            kind: o.kind,
            lr: self.lr(),
            beta1: o.beta1,
            beta2: o.beta2,
            alpha: o.alpha,
            eps: o.eps,
            riemannian_rescale: o.riemannian_rescale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.run.steps,
            batch_size: self.run.batch_size,
            eval_interval: self.run.eval_interval,
            seed: self.task.seed,
        }
    }

    pub fn train_split(&self) -> (DatasetConfig, u64) {
        let t = &self.task;
        let cfg = DatasetConfig { vocab_size: t.vocab_size, seq_len: t.seq_len, n_examples: t.n_train };
        (cfg, derive_seed(t.seed, "data.train"))
    }

    pub fn eval_split(&self) -> (DatasetConfig, u64) {
        let t = &self.task;
        let cfg = DatasetConfig { vocab_size: t.vocab_size, seq_len: t.seq_len, n_examples: t.n_eval };
        (cfg, derive_seed(t.seed, "data.eval"))
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.task.seed, "init")
    }

    pub fn shuffle_seed(&self) -> u64 {
        derive_seed(self.task.seed, "shuffle")
    }
}
