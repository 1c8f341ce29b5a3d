use crate::error::{Result, ThgError};
use crate::tasks::dataset::PAD;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub token_accuracy: f64,
    pub span_f1: f64,
}

/// Maximal runs of label 1 as half-open `(start, end)` ranges.
pub fn extract_spans(labels: &[usize]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l == 1, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, labels.len()));
    }
    spans
}

/// Token accuracy over non-PAD positions and exact-boundary span F1,
/// micro-averaged over all sequences.
pub fn score(tokens: &[Vec<usize>], gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<EvalMetrics> {
    if gold.is_empty() {
        return Err(ThgError::Contract("cannot evaluate an empty dataset".into()));
    }
    if gold.len() != pred.len() || gold.len() != tokens.len() {
        return Err(ThgError::Shape("tokens, gold and predictions differ in count".into()));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for ((toks, g), p) in tokens.iter().zip(gold).zip(pred) {
        if g.len() != p.len() || g.len() != toks.len() {
            return Err(ThgError::Shape("sequence length mismatch".into()));
        }
        for ((&t, &gl), &pl) in toks.iter().zip(g).zip(p) {
            if t != PAD {
                total += 1;
                correct += usize::from(gl == pl);
            }
        }
        let gs = extract_spans(g);
        let ps = extract_spans(p);
        tp += ps.iter().filter(|s| gs.contains(s)).count();
        n_pred += ps.len();
        n_gold += gs.len();
    }
    let precision = if n_pred == 0 { 0.0 } else { tp as f64 / n_pred as f64 };
    let recall = if n_gold == 0 { 0.0 } else { tp as f64 / n_gold as f64 };
    let span_f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let token_accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    Ok(EvalMetrics { token_accuracy, span_f1 })
}
