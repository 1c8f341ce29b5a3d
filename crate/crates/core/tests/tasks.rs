use thg_core::layers::ModelKind;
use thg_core::optim::{OptimConfig, OptimizerKind};
use thg_core::tasks::{generate_dataset, train, DatasetConfig, ModelConfig, TaggerModel, TrainConfig};

#[test]
fn serialization_is_reproducible() {
    let cfg = DatasetConfig { vocab_size: 32, seq_len: 32, n_examples: 200 };
    let a = generate_dataset(&cfg, 5).unwrap().to_text();
    let b = generate_dataset(&cfg, 5).unwrap().to_text();
    assert_eq!(a.as_bytes(), b.as_bytes());
    assert_ne!(a, generate_dataset(&cfg, 6).unwrap().to_text());
}

#[test]
fn loss_drops_within_two_hundred_steps() {
    let data_cfg = DatasetConfig { vocab_size: 32, seq_len: 32, n_examples: 1000 };
    let eval_cfg = DatasetConfig { n_examples: 8, ..data_cfg };
    for kind in [ModelKind::Thg, ModelKind::Euclidean] {
        for seed in 0..3 {
            let data = generate_dataset(&data_cfg, seed).unwrap();
            let eval = generate_dataset(&eval_cfg, seed + 100).unwrap();
            let mut cfg = ModelConfig::<f64>::new(32, 32);
            cfg.kind = kind;
            let mut model = TaggerModel::new(cfg, seed).unwrap();
            let run = TrainConfig { steps: 200, batch_size: 16, eval_interval: 200, seed };
            let rows = train(&mut model, &data, &eval, OptimConfig::new(OptimizerKind::Adam), &run).unwrap();
            let (first, last) = (rows[0], rows[rows.len() - 1]);
            assert_eq!(last.step, 200);
            assert!(last.loss < first.loss, "{kind} seed {seed}: {} -> {}", first.loss, last.loss);
        }
    }
}
