//! Mean-only batch normalization: centering in training, running means in evaluation.

use weightnorm::normalization::{meanonly_backward, meanonly_forward, MeanOnlyBNState};
use weightnorm::numerics::{mean_std, sample_normal, RngStream};
use weightnorm::{Mode, Tensor};

fn main() -> weightnorm::Result<()> {
    let mut rng = RngStream::new(3);
    let b = Tensor::vector(vec![0.5, -1.0, 2.0]);
    let mut state = MeanOnlyBNState::new(3, 0.9)?;
    for step in 0..5 {
        let t = sample_normal(&mut rng, &[50, 3], 4.0, 2.0);
        let out = meanonly_forward(&t, &b, &mut state, Mode::Train)?;
        let (m, s) = mean_std(&out, &[0])?;
        println!("step {step}: output means {:?}, stds {:?}", m.data(), s.data());
    }
    println!("running mean {:?}", state.running_mean().data());
    let probe = Tensor::from_rows(&[[4.0, 4.0, 4.0]])?;
    println!("eval on [4, 4, 4]: {:?}", meanonly_forward(&probe, &b, &mut state, Mode::Eval)?.data());

    let grad = sample_normal(&mut rng, &[50, 3], 1.0, 1.0);
    let (gt, gb) = meanonly_backward(&grad)?;
    let (gm, _) = mean_std(&gt, &[0])?;
    println!("∇t column means {:?} (zero), ∇b {:?}", gm.data(), gb.data());
    Ok(())
}
