//! Data-dependent initialization of a deep MLP: every layer starts with
//! zero-mean, unit-variance pre-activations on the init batch.

use weightnorm::network::{build_model, Activation, LayerSpec, NormMode};
use weightnorm::normalization::INIT_EPS;
use weightnorm::numerics::{sample_normal, RngStream};

fn main() -> weightnorm::Result<()> {
    let x = sample_normal(&mut RngStream::new(1), &[100, 32], 0.5, 4.0);
    for mode in NormMode::ALL {
        let specs = [
            LayerSpec::dense(32, 64, mode, Activation::Relu),
            LayerSpec::dense(64, 64, mode, Activation::Relu),
            LayerSpec::dense(64, 32, mode, Activation::Relu),
            LayerSpec::dense(32, 10, mode, Activation::Identity),
        ];
        let mut model = build_model(&[32], &specs, RngStream::new(2))?;
        let reports = model.data_dependent_init(&x, INIT_EPS)?;
        println!("{mode}");
        for (i, r) in reports.iter().enumerate() {
            let std_err = r.post_std.data().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
            println!(
                "  layer {i}: max |mean| {:.1e}, max |std − 1| {std_err:.1e}, g in [{:.3}, {:.3}]",
                r.post_mean.max_abs(),
                r.g_init.data().iter().cloned().fold(f64::INFINITY, f64::min),
                r.g_init.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
        }
    }
    Ok(())
}
