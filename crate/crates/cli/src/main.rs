use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thg_cli::bench::{cmd_bench_compat, BenchArgs};
use thg_cli::gradcheck::cmd_gradcheck;
use thg_cli::run::{cmd_eval, cmd_train, format_sig9, load_config};
use thg_cli::CliError;

#[derive(Parser)]
#[command(name = "thg", version, about = "Transformer with hyperbolic geometry: train, evaluate, verify, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a span tagger; writes metrics.csv, final.ckpt and config.resolved to run.out_dir.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on the eval split described by a config.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Finite-difference check of every composed backward pass.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Time dot-product against hyperbolic-distance attention.
    BenchCompat {
        #[arg(long)]
        seq: usize,
        #[arg(long)]
        dmodel: usize,
        #[arg(long)]
        heads: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            cmd_train(&cfg)?;
        }
        Command::Eval { ckpt, config } => {
            let cfg = load_config(&config)?;
            let m = cmd_eval(&ckpt, &cfg)?;
            println!("token_accuracy {}", format_sig9(m.token_accuracy));
            println!("span_f1 {}", format_sig9(m.span_f1));
        }
        Command::Gradcheck { inject_fault } => {
            cmd_gradcheck(inject_fault)?;
        }
        Command::BenchCompat { seq, dmodel, heads, repeats } => {
            cmd_bench_compat(&BenchArgs { seq, d_model: dmodel, heads, repeats })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
