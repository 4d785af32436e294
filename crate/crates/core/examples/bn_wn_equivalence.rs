//! On whitened inputs, batch normalization of `v·x` is weight normalization of `v`.

use weightnorm::normalization::{batchnorm_forward, BatchNormState};
use weightnorm::numerics::tensor::norm;
use weightnorm::numerics::{matmul, mean_std, sample_normal, zca_whiten, RngStream};
use weightnorm::Mode;

fn main() -> weightnorm::Result<()> {
    let mut rng = RngStream::new(7);
    let x = sample_normal(&mut rng, &[256, 6], 2.0, 3.0);
    let xw = zca_whiten(&x, 1e-13)?.xw;
    let v = sample_normal(&mut rng, &[4, 6], 0.0, 1.0);
    let t = matmul(&xw, &v.transpose()?)?;
    let (mu, sigma) = mean_std(&t, &[0])?;
    for (j, row) in v.rows().enumerate() {
        println!(
            "unit {j}: μ[t] = {:+.2e}, σ[t] = {:.12}, ‖v‖ = {:.12}",
            mu.data()[j],
            sigma.data()[j],
            norm(row)
        );
    }
    let mut state = BatchNormState::new(4, 0.9, 0.0)?;
    let (bn, _) = batchnorm_forward(&t, &mut state, Mode::Train)?;
    let mut wn = t.clone();
    for (i, out) in wn.data_mut().iter_mut().enumerate() {
        *out /= norm(v.row(i % 4));
    }
    println!("max |BN(v·x) − (v/‖v‖)·x| = {:.2e}", bn.max_abs_diff(&wn)?);
    Ok(())
}
