//! Train on seeded Gaussian blobs from a JSON config, under each parameterization.

use std::path::Path;

use weightnorm::harness::{load_dataset, train_run, ExperimentConfig};

fn main() -> weightnorm::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synth-blobs.json");
    let cfg = ExperimentConfig::from_file(&config)?;
    let data = load_dataset(&cfg)?;
    for &mode in &cfg.modes {
        let (record, _) = train_run(&cfg, &data, mode, cfg.lr_grid[0])?;
        let last = record.rows.last().expect("at least one epoch");
        println!(
            "{:<26} loss {:.3} -> {:.3}, train err {:.3}, test err {:.3}",
            mode.name(),
            record.initial_train_loss,
            last.train_loss,
            last.train_error,
            last.test_error
        );
    }
    Ok(())
}
