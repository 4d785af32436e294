//! Backprop against central finite differences for every parameterization,
//! on a dense and on a convolutional network.

use weightnorm::network::{build_model, check_gradients, Activation, LayerSpec, NormMode};
use weightnorm::numerics::{sample_normal, RngStream};

fn main() -> weightnorm::Result<()> {
    for mode in NormMode::ALL {
        let dense = [
            LayerSpec::dense(6, 12, mode, Activation::leaky()),
            LayerSpec::dense(12, 3, mode, Activation::Identity),
        ];
        let conv = [
            LayerSpec::conv(2, 3, 3, 1, mode, Activation::leaky()),
            LayerSpec::MaxPool2x2,
            LayerSpec::conv(3, 4, 3, 0, mode, Activation::Identity),
            LayerSpec::GlobalAvgPool,
        ];
        for (name, shape, specs) in [("dense", vec![6], &dense[..]), ("conv", vec![2, 6, 6], &conv[..])] {
            let mut model = build_model(&shape, specs, RngStream::new(9))?;
            let mut batch_shape = vec![6];
            batch_shape.extend(&shape);
            let x = sample_normal(&mut RngStream::new(10), &batch_shape, 0.0, 1.0);
            let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
            model.data_dependent_init(&x, 1e-10)?;
            let r = check_gradients(&model, &x, &labels, 1e-5)?;
            println!(
                "{:<26} {name:<5} {:>4} coords, max rel err {:.2e}, {:.1}% within 1e-5",
                mode.name(),
                r.coords.len(),
                r.max_rel_err(),
                100.0 * r.fraction_within(1e-5)
            );
        }
    }
    Ok(())
}
