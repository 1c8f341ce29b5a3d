//! Synthetic span-tagging data.
//!
//! Every sequence holds one `BEGIN` and one later `END` marker among random
//! filler tokens. Tokens strictly between the markers are labelled 1, all
//! others 0, so a token's label depends on positions elsewhere in the
//! sequence.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Result, ThgError};
use crate::seed::rng;

pub const PAD: usize = 0;
pub const BEGIN: usize = 1;
pub const END: usize = 2;
/// First id available for filler tokens.
pub const FIRST_FILLER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub n_examples: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { vocab_size: 32, seq_len: 32, n_examples: 1000 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 4 {
            return Err(ThgError::Contract(format!("seq_len must be >= 4, got {}", self.seq_len)));
        }
        if self.vocab_size < 4 {
            return Err(ThgError::Contract(format!("vocab_size must be >= 4, got {}", self.vocab_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Example {
    pub fn begin_pos(&self) -> Option<usize> {
        self.tokens.iter().position(|&t| t == BEGIN)
    }

    pub fn end_pos(&self) -> Option<usize> {
        self.tokens.iter().position(|&t| t == END)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanTaggingDataset {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub seed: u64,
    pub examples: Vec<Example>,
}

pub fn generate_dataset(cfg: &DatasetConfig, seed: u64) -> Result<SpanTaggingDataset> {
    cfg.validate()?;
    let mut rng = rng(seed);
    let n = cfg.seq_len;
    let examples = (0..cfg.n_examples)
        .map(|_| {
            let mut tokens: Vec<usize> = (0..n).map(|_| rng.gen_range(FIRST_FILLER..cfg.vocab_size)).collect();
            // Uniform over all pairs with begin < end - 1.
            let (begin, end) = loop {
                let b = rng.gen_range(0..n);
                let e = rng.gen_range(0..n);
                if b + 1 < e {
                    break (b, e);
                }
            };
            tokens[begin] = BEGIN;
            tokens[end] = END;
            let labels = (0..n).map(|i| usize::from(i > begin && i < end)).collect();
            Example { tokens, labels }
        })
        .collect();
    Ok(SpanTaggingDataset { vocab_size: cfg.vocab_size, seq_len: n, seed, examples })
}

impl SpanTaggingDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// One example per line: token ids, a tab, then labels, each space-separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "{}\t{}", join(&ex.tokens), join(&ex.labels));
        }
        out
    }

    /// Parses the line format of [`to_text`](Self::to_text). Metadata not
    /// present in the text (vocabulary size, seed) is supplied by the caller.
    pub fn from_text(text: &str, vocab_size: usize, seed: u64) -> Result<Self> {
        let mut examples = Vec::new();
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: &str| ThgError::Contract(format!("line {}: {msg}", lineno + 1));
            let (toks, labs) = line.split_once('\t').ok_or_else(|| bad("missing tab separator"))?;
            let parse = |s: &str| {
                s.split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|_| bad(&format!("bad integer `{t}`"))))
                    .collect::<Result<Vec<_>>>()
            };
            let tokens = parse(toks)?;
            let labels = parse(labs)?;
            if tokens.len() != labels.len() {
                return Err(bad("token and label counts differ"));
            }
            if tokens.iter().any(|&t| t >= vocab_size) {
                return Err(bad("token id outside vocabulary"));
            }
            examples.push(Example { tokens, labels });
        }
        let seq_len = examples.first().map_or(0, |e| e.tokens.len());
        if examples.iter().any(|e| e.tokens.len() != seq_len) {
            return Err(ThgError::Contract("sequences of differing length".into()));
        }
        Ok(Self { vocab_size, seq_len, seed, examples })
    }
}
