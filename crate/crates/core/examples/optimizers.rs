//! SGD, momentum, Adam and Adamax on an ill-conditioned quadratic, plus
//! parameter averaging and the two-phase schedule.

use weightnorm::optim::{ema_update, lr_schedule, EmaState, Optimizer, OptimizerKind};
use weightnorm::Tensor;

fn main() -> weightnorm::Result<()> {
    // L = ½ (x² + 25 y²)
    let curvature = [1.0, 25.0];
    let steps = 100;
    for (kind, lr) in [
        (OptimizerKind::Sgd, 0.03),
        (OptimizerKind::Momentum { momentum: 0.9 }, 0.01),
        (OptimizerKind::Adam, 0.1),
        (OptimizerKind::Adamax, 0.1),
    ] {
        let mut opt = Optimizer::new(kind, lr);
        let mut theta = Tensor::vector(vec![3.0, -2.0]);
        let mut ema = EmaState::new(EmaState::decay_for(1.0, 10))?;
        for epoch in 0..steps {
            let (l, m) = lr_schedule(epoch, steps, lr)?;
            opt.set_schedule(l, m);
            let g = Tensor::vector(theta.data().iter().zip(curvature).map(|(t, c)| c * t).collect());
            opt.step(&mut [&mut theta], &[g])?;
            ema_update(&mut ema, &[&theta])?;
        }
        let loss = |t: &Tensor| 0.5 * t.data().iter().zip(curvature).map(|(x, c)| c * x * x).sum::<f64>();
        println!(
            "{kind:?}: final loss {:.3e}, averaged-parameter loss {:.3e}",
            loss(&theta),
            loss(&ema.shadow()[0])
        );
    }
    for epoch in [0, 99, 100, 150, 199] {
        let (lr, m) = lr_schedule(epoch, 200, 0.003)?;
        println!("schedule epoch {epoch:>3}: lr {lr:.6}, momentum {m}");
    }
    Ok(())
}
