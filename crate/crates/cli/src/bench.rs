//! `bench-compat` subcommand: forward-pass wall time of the two
//! compatibility functions on identical weights and inputs.

use std::time::{Duration, Instant};

use thg_core::layers::{init_normal, CompatMode, EncoderConfig, ThgEncoder};
use thg_core::seed::derive_seed;
use thg_core::Graph64;

use crate::error::CliError;

const SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchArgs {
    pub seq: usize,
    pub d_model: usize,
    pub heads: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTiming {
    pub mode: CompatMode,
    pub mean_ms: f64,
    pub median_ms: f64,
}

impl BenchArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seq == 0 || self.d_model == 0 || self.heads == 0 || self.repeats == 0 {
            return Err(CliError::Config("seq, dmodel, heads and repeats must all be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(CliError::Config(format!("dmodel {} is not divisible by heads {}", self.d_model, self.heads)));
        }
        Ok(())
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn time_mode(args: &BenchArgs, mode: CompatMode) -> Result<ModeTiming, CliError> {
    let cfg = EncoderConfig { compat: mode, ..EncoderConfig::new(args.d_model, args.heads) };
    let enc = ThgEncoder::new("bench", &cfg, derive_seed(SEED, "weights"))?;
    let x = init_normal::<f64>(args.seq, args.d_model, 1.0, derive_seed(SEED, "input"));
    let pass = || -> Result<Duration, CliError> {
        let start = Instant::now();
        let mut g = Graph64::new();
        let xv = g.constant(x.clone())?;
        let out = enc.forward(&mut g, xv, args.seq, None)?;
        std::hint::black_box(g.value(out));
        Ok(start.elapsed())
    };
    pass()?;
    let mut times: Vec<f64> = (0..args.repeats).map(|_| pass().map(ms)).collect::<Result<_, _>>()?;
    let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    let median_ms = if times.len().is_multiple_of(2) { 0.5 * (times[mid - 1] + times[mid]) } else { times[mid] };
    Ok(ModeTiming { mode, mean_ms, median_ms })
}

/// Times both modes; the dot-product baseline comes first.
pub fn bench_compat(args: &BenchArgs) -> Result<Vec<ModeTiming>, CliError> {
    args.validate()?;
    [CompatMode::DotProduct, CompatMode::HyperbolicDistance].into_iter().map(|m| time_mode(args, m)).collect()
}

pub fn render_csv(timings: &[ModeTiming]) -> String {
    let base = timings[0].mean_ms;
    let mut s = String::from("mode,mean_ms,ratio_vs_dot\n");
    for t in timings {
        s.push_str(&format!("{},{:.6},{:.6}\n", t.mode, t.mean_ms, t.mean_ms / base));
    }
    s
}

pub fn cmd_bench_compat(args: &BenchArgs) -> Result<Vec<ModeTiming>, CliError> {
    let timings = bench_compat(args)?;
    print!("{}", render_csv(&timings));
    for t in &timings {
        eprintln!("median_ms {} {:.6}", t.mode, t.median_ms);
    }
    Ok(timings)
}
