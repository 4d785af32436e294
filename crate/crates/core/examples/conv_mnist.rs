//! A small weight-normalized conv net on the MNIST subset, saved and reloaded
//! through a checkpoint.

use std::path::Path;

use weightnorm::harness::{evaluate, load_checkpoint, load_dataset, save_checkpoint, train_run, ExperimentConfig, ModelConfig};
use weightnorm::network::NormMode;

fn main() -> weightnorm::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mnist-mlp.json");
    let mut cfg = ExperimentConfig::from_file(&config)?;
    cfg.model = ModelConfig::Named("small-conv".into());
    cfg.epochs = 5;
    let data = load_dataset(&cfg)?;
    let (record, model) = train_run(&cfg, &data, NormMode::WeightNorm, 0.003)?;
    for r in &record.rows {
        println!(
            "epoch {}: train loss {:.4}, train err {:.3}, test err {:.3}, g/‖v‖ {:.3}",
            r.epoch, r.train_loss, r.train_error, r.test_error, r.g_over_v
        );
    }
    let dir = std::env::temp_dir().join("wnorm-example");
    let path = dir.join("small-conv.ckpt");
    save_checkpoint(&path, &model)?;
    let restored = load_checkpoint(&path)?;
    let test_x = data.test_x.clone().reshape(&[data.test_y.len(), 1, 28, 28])?;
    let (_, err) = evaluate(&restored, &test_x, &data.test_y)?;
    println!("restored from {}: test err {err:.3}", path.display());
    Ok(())
}
