//! `train` and `eval` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thg_core::layers::Module;
use thg_core::tasks::{evaluate, generate_dataset, train, EvalMetrics, MetricsRow};
use thg_core::TaggerModel64;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::CliError;

pub const METRICS_HEADER: &str = "step,loss,token_accuracy,span_f1";

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunConfig::parse(&text).map_err(CliError::Config)
}

/// Plain decimal with nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    // The exponent of the correctly rounded value, so 9.9999999996 counts as 10.
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.step,
            format_sig9(r.loss),
            format_sig9(r.token_accuracy),
            format_sig9(r.span_f1)
        );
    }
    s
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Trains per `cfg` and writes `config.resolved`, `metrics.csv` and
/// `final.ckpt` into the configured output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<MetricsRow>, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let out = &cfg.run.out_dir;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write(&out.join("config.resolved"), cfg.to_resolved())?;

    let (train_cfg, train_seed) = cfg.train_split();
    let (eval_cfg, eval_seed) = cfg.eval_split();
    let train_data = generate_dataset(&train_cfg, train_seed)?;
    let eval_data = generate_dataset(&eval_cfg, eval_seed)?;
    let mut model = TaggerModel64::new(cfg.model_config(), cfg.init_seed())?;

    let rows = train(&mut model, &train_data, &eval_data, cfg.optim_config(), &cfg.train_config())?;
    for r in &rows {
        eprintln!(
            "step {:>6}  loss {}  token_accuracy {}  span_f1 {}",
            r.step,
            format_sig9(r.loss),
            format_sig9(r.token_accuracy),
            format_sig9(r.span_f1)
        );
    }
    write(&out.join("metrics.csv"), metrics_csv(&rows))?;
    let tensors: Vec<_> = model.params().into_iter().map(|p| (p.name.clone(), p.value.clone())).collect();
    checkpoint::save(&out.join("final.ckpt"), &tensors)?;
    Ok(rows)
}

/// Rebuilds the model described by `cfg` with weights from `ckpt`.
pub fn load_model(ckpt: &Path, cfg: &RunConfig) -> Result<TaggerModel64, CliError> {
    let tensors = checkpoint::load(ckpt)?;
    let mut model = TaggerModel64::new(cfg.model_config(), cfg.init_seed())?;
    model.load_tensors(&tensors).map_err(|e| CliError::Shape(e.to_string()))?;
    Ok(model)
}

/// Scores a checkpoint on the eval split generated from the config seed.
pub fn cmd_eval(ckpt: &Path, cfg: &RunConfig) -> Result<EvalMetrics, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let model = load_model(ckpt, cfg)?;
    let (eval_cfg, eval_seed) = cfg.eval_split();
    let data = generate_dataset(&eval_cfg, eval_seed)?;
    Ok(evaluate(&model, &data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(0.12345678949), "0.123456789");
        assert_eq!(format_sig9(123.456), "123.456000");
        assert_eq!(format_sig9(1.0242387895173163e-5), "0.0000102423879");
        assert_eq!(format_sig9(9.9999999996), "10.0000000");
        assert_eq!(format_sig9(0.0), "0.00000000");
        assert_eq!(format_sig9(-2.5), "-2.50000000");
    }

    #[test]
    fn csv_layout() {
        let rows = [MetricsRow { step: 0, loss: 0.5, token_accuracy: 0.25, span_f1: 0.0 }];
        assert_eq!(metrics_csv(&rows), "step,loss,token_accuracy,span_f1\n0,0.500000000,0.250000000,0.00000000\n");
    }
}
