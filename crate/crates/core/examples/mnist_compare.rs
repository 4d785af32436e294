//! Five-way comparison on the bundled 1000-image MNIST subset.
//!
//! `cargo run --release --example mnist_compare -- [epochs] [seed]`

use std::path::Path;

use weightnorm::harness::{compare_on, load_dataset, ExperimentConfig};

fn main() -> weightnorm::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mnist-mlp.json");
    let mut cfg = ExperimentConfig::from_file(&config)?;
    cfg.epochs = args.next().map_or(Ok(10), |a| a.parse()).expect("epochs");
    cfg.seed = args.next().map_or(Ok(0), |a| a.parse()).expect("seed");
    let data = load_dataset(&cfg)?;
    let cmp = compare_on(&cfg, &data)?;
    println!("mode                        best lr  epochs to {:.0}%  final train err  test err  diverged", 100.0 * cfg.error_threshold);
    for s in cmp.summary() {
        println!(
            "{:<27} {:>7}  {:>14}  {:>15.3}  {:>8.3}  {}/{}",
            s.mode.name(),
            s.best_lr.map_or("-".into(), |l| l.to_string()),
            s.epochs_to_threshold.map_or("never".into(), |e| e.to_string()),
            s.final_train_error.unwrap_or(f64::NAN),
            s.final_test_error.unwrap_or(f64::NAN),
            s.diverged_runs,
            s.runs
        );
    }
    Ok(())
}
