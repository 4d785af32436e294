//! Records `‖v‖`, `g` and `g/‖v‖` while training with plain SGD at two
//! learning rates; the trace CSV goes to stdout.

use weightnorm::analysis::{record_norm_trace, NormTrace};
use weightnorm::network::{build_model, softmax_xent, Activation, LayerSpec, NormMode};
use weightnorm::numerics::{sample_normal, RngStream};
use weightnorm::optim::sgd_step;
use weightnorm::Mode;

fn main() -> weightnorm::Result<()> {
    let x = sample_normal(&mut RngStream::new(0), &[64, 10], 0.0, 1.0);
    let y: Vec<usize> = (0..64).map(|i| (i * 5 + i / 3) % 4).collect();
    for lr in [0.1, 1.0] {
        let specs = [
            LayerSpec::dense(10, 32, NormMode::WeightNorm, Activation::leaky()),
            LayerSpec::dense(32, 4, NormMode::WeightNorm, Activation::Identity),
        ];
        let mut model = build_model(&[10], &specs, RngStream::new(1))?;
        let mut trace = NormTrace::new();
        for step in 0..300 {
            record_norm_trace(&mut trace, &model, step)?;
            let (cache, logits) = model.forward(&x, Mode::Train)?;
            let (_, grad) = softmax_xent(&logits, &y)?;
            let g = model.backward(&cache, &grad)?;
            sgd_step(&mut model.parameters_mut(), &g.tensors, lr)?;
            model.commit()?;
        }
        let last = trace.layer_rows(0).last().expect("recorded");
        eprintln!("lr {lr}: final ‖v‖ {:.3}, g/‖v‖ {:.3}", last.v_norm, last.g_over_v);
        println!("# lr = {lr}");
        trace.write_csv(std::io::stdout())?;
    }
    Ok(())
}
