use rand::seq::SliceRandom;

use crate::autodiff::Graph;
use crate::error::{Result, ThgError};
use crate::layers::Module;
use crate::optim::{OptimConfig, OptimizerState};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng};
use crate::tasks::dataset::SpanTaggingDataset;
use crate::tasks::metrics::{score, EvalMetrics};
use crate::tasks::model::TaggerModel;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    /// Seeds minibatch shuffling.
    pub seed: u64,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    /// Minibatch loss at this step, before the update.
    pub loss: f64,
    pub token_accuracy: f64,
    pub span_f1: f64,
}

pub fn evaluate<T: Scalar>(model: &TaggerModel<T>, data: &SpanTaggingDataset) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(ThgError::Contract("cannot evaluate an empty dataset".into()));
    }
    let mut preds = Vec::with_capacity(data.len());
    for chunk in data.examples.chunks(EVAL_BATCH) {
        let batch: Vec<&[usize]> = chunk.iter().map(|e| e.tokens.as_slice()).collect();
        preds.extend(model.predict(&batch)?);
    }
    let tokens: Vec<Vec<usize>> = data.examples.iter().map(|e| e.tokens.clone()).collect();
    let gold: Vec<Vec<usize>> = data.examples.iter().map(|e| e.labels.clone()).collect();
    score(&tokens, &gold, &preds)
}

/// Minibatch cross-entropy training. Logs a row at step 0 and after every
/// `eval_interval` updates; metrics are measured on `eval`.
pub fn train<T: Scalar>(
    model: &mut TaggerModel<T>,
    data: &SpanTaggingDataset,
    eval: &SpanTaggingDataset,
    optim: OptimConfig<T>,
    cfg: &TrainConfig,
) -> Result<Vec<MetricsRow>> {
    if data.is_empty() {
        return Err(ThgError::Contract("empty training set".into()));
    }
    if cfg.batch_size == 0 || cfg.eval_interval == 0 {
        return Err(ThgError::Contract("batch_size and eval_interval must be positive".into()));
    }
    let mut opt = OptimizerState::new(optim);
    let mut shuffle = rng(derive_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut history = Vec::new();

    for step in 0..=cfg.steps {
        let log_now = step % cfg.eval_interval == 0;
        if step == cfg.steps && !log_now {
            break;
        }
        let mut batch_idx = Vec::with_capacity(cfg.batch_size);
        while batch_idx.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let tokens: Vec<&[usize]> = batch_idx.iter().map(|&i| data.examples[i].tokens.as_slice()).collect();
        let labels: Vec<&[usize]> = batch_idx.iter().map(|&i| data.examples[i].labels.as_slice()).collect();

        let diverged = |e: ThgError| match e {
            ThgError::NonFinite(_) => ThgError::Diverged { step },
            other => other,
        };
        let mut g = Graph::new();
        let loss = model.loss(&mut g, &tokens, &labels).map_err(diverged)?;
        let loss_value = g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
        if !loss_value.is_finite() {
            return Err(ThgError::Diverged { step });
        }
        if log_now {
            let m = evaluate(model, eval).map_err(diverged)?;
            history.push(MetricsRow { step, loss: loss_value, token_accuracy: m.token_accuracy, span_f1: m.span_f1 });
        }
        if step == cfg.steps {
            break;
        }
        g.backward(loss)?;
        let grads = g.param_grads();
        if grads.iter().any(|(_, t)| !t.all_finite()) {
            return Err(ThgError::Diverged { step });
        }
        let mut params = model.params_mut();
        opt.step(&mut params, &grads)?;
    }
    Ok(history)
}
