//! Per-example gradient covariance of one neuron, its projection through the
//! weight-norm Jacobian and the alignment of `w` with the dominant eigenvector.

use weightnorm::analysis::{dominant_alignment, grad_covariance, per_example_weight_grads, transformed_covariance};
use weightnorm::network::{build_model, Activation, LayerSpec, NormMode, Weights, Layer};
use weightnorm::numerics::{sample_normal, sym_eigen, RngStream};

fn main() -> weightnorm::Result<()> {
    let specs = [
        LayerSpec::dense(8, 16, NormMode::WeightNorm, Activation::leaky()),
        LayerSpec::dense(16, 3, NormMode::WeightNorm, Activation::Identity),
    ];
    let mut model = build_model(&[8], &specs, RngStream::new(4))?;
    let x = sample_normal(&mut RngStream::new(5), &[128, 8], 0.0, 1.0);
    let labels: Vec<usize> = (0..128).map(|i| i % 3).collect();
    model.data_dependent_init(&x, 1e-10)?;
    let Layer::Affine(layer) = &model.layers()[0] else { unreachable!() };
    let Weights::Normalized(p) = &layer.weights else { unreachable!() };
    for unit in 0..4 {
        let grads = per_example_weight_grads(&model, &x, &labels, 0, unit)?;
        let c = grad_covariance(&grads)?;
        let v = p.v().row(unit);
        let g = p.g().data()[unit];
        let d = transformed_covariance(&c, v, g)?;
        let top_c = sym_eigen(&c.c)?.values[0];
        let top_d = sym_eigen(&d)?.values[0];
        println!(
            "unit {unit}: |cos(w, top eigvec of C)| = {:.3}, λmax(C) = {top_c:.3e}, λmax(D) = {top_d:.3e}",
            dominant_alignment(&c, v)?
        );
    }
    Ok(())
}
