use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thg_cli::checkpoint;
use thg_cli::config::RunConfig;

fn thg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thg")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small run that finishes in a second or two.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        "model.d_model = 12\nmodel.n_heads = 3\ntask.seq_len = 8\ntask.vocab_size = 10\n\
         task.n_train = 64\ntask.n_eval = 16\ntask.seed = 3\nrun.steps = 20\nrun.eval_interval = 5\n\
         run.batch_size = 4\nrun.out_dir = {}\n{extra}",
        out.display()
    );
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = thg(&["train", "--config", path_str(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss,token_accuracy,span_f1");
    assert_eq!(lines.len() - 1, 20 / 5 + 1);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert_eq!(fields[0].parse::<usize>().unwrap(), i * 5);
        for f in &fields[1..] {
            if f.parse::<f64>().unwrap() == 0.0 {
                assert_eq!(*f, "0.00000000");
            } else {
                let digits = f.trim_start_matches(['-', '0', '.']).replace('.', "");
                assert_eq!(digits.len(), 9, "{f}");
            }
        }
    }
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("optim.lr = 0.001"));
    assert!(resolved.contains("model.n_layers = 1"));
    let tensors = checkpoint::load(&out.join("final.ckpt")).unwrap();
    assert!(tensors.iter().any(|(n, _)| n == "encoder.0.q_proj.b"));
}

#[test]
fn resolved_config_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&thg(&["train", "--config", path_str(&cfg)])), 0);
    let out = dir.path().join("out");
    let first = fs::read(out.join("metrics.csv")).unwrap();
    let resolved = out.join("config.resolved");
    let copy = dir.path().join("resolved.cfg");
    fs::copy(&resolved, &copy).unwrap();
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(code(&thg(&["train", "--config", path_str(&copy)])), 0);
    assert_eq!(fs::read(out.join("metrics.csv")).unwrap(), first);
}

#[test]
fn model_kinds_differ_at_step_zero() {
    let dir = tempfile::tempdir().unwrap();
    let loss0 = |kind: &str| {
        let sub = dir.path().join(kind);
        fs::create_dir_all(&sub).unwrap();
        let cfg = write_config(&sub, &format!("model.model_kind = {kind}\n"));
        assert_eq!(code(&thg(&["train", "--config", path_str(&cfg)])), 0);
        let csv = fs::read_to_string(sub.join("out/metrics.csv")).unwrap();
        csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse::<f64>().unwrap()
    };
    let (a, b) = (loss0("thg"), loss0("euclidean"));
    assert!(a.is_finite() && b.is_finite());
    assert_ne!(a, b);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "model.d_model = 60\nmodel.n_heads = 7\n").unwrap();
    let o = thg(&["train", "--config", path_str(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("divisible"), "{}", stderr(&o));
    assert!(!dir.path().join("runs").exists());

    fs::write(&cfg, "model.d_modle = 60\n").unwrap();
    assert_eq!(code(&thg(&["train", "--config", path_str(&cfg)])), 1);
}

#[test]
fn missing_config_exits_3() {
    let o = thg(&["train", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn divergence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "optim.lr = 1e300\n");
    let o = thg(&["train", "--config", path_str(&cfg)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn eval_is_deterministic_and_guards_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(code(&thg(&["train", "--config", path_str(&cfg)])), 0);
    let ckpt = dir.path().join("out/final.ckpt");
    let args = ["eval", "--ckpt", path_str(&ckpt), "--config", path_str(&cfg)];
    let a = thg(&args);
    let b = thg(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(text.starts_with("token_accuracy ") && text.contains("\nspan_f1 "));
    assert_eq!(a.stdout, b.stdout);

    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[1] ^= 0xff;
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, &bytes).unwrap();
    let o = thg(&["eval", "--ckpt", path_str(&bad), "--config", path_str(&cfg)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("bad checkpoint magic"));

    let wider = dir.path().join("wider.cfg");
    let text = fs::read_to_string(&cfg).unwrap().replace("model.d_model = 12", "model.d_model = 15");
    fs::write(&wider, text).unwrap();
    let o = thg(&["eval", "--ckpt", path_str(&ckpt), "--config", path_str(&wider)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn gradcheck_reports_named_checks() {
    let o = thg(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    let passed = text.lines().filter(|l| l.ends_with(" ok")).count();
    assert!(passed >= 6);
    assert!(text.contains("hyperbolic_linear") && text.contains("encoder_forward"));
}

#[test]
fn gradcheck_catches_a_flipped_derivative() {
    let o = thg(&["gradcheck", "--inject-fault"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("faulty_tanh"));
}

#[test]
fn bench_prints_csv() {
    let o = thg(&["bench-compat", "--seq", "8", "--dmodel", "12", "--heads", "3", "--repeats", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mode,mean_ms,ratio_vs_dot");
    assert!(lines[1].starts_with("dot_product,") && lines[1].ends_with(",1.000000"));
    assert!(lines[2].starts_with("hyperbolic_distance,"));
    assert!(stderr(&o).contains("median_ms"));
}

#[test]
fn bench_rejects_bad_dims() {
    for args in [["8", "12", "3", "0"], ["8", "12", "5", "2"], ["0", "12", "3", "2"]] {
        let o = thg(&["bench-compat", "--seq", args[0], "--dmodel", args[1], "--heads", args[2], "--repeats", args[3]]);
        assert_eq!(code(&o), 1, "{args:?}");
    }
}

#[test]
fn default_config_parses_from_empty_file() {
    let cfg = RunConfig::parse("").unwrap();
    assert_eq!((cfg.model.d_model, cfg.model.n_heads, cfg.model.n_layers), (60, 5, 1));
    assert_eq!(cfg.lr(), 1e-3);
}
