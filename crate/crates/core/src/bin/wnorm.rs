use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use weightnorm::analysis::{dominant_eigenvector, grad_covariance, per_example_weight_grads, transformed_covariance};
use weightnorm::harness::{
    compare_parameterizations, init_model, load_checkpoint, load_dataset, save_checkpoint, train_run,
    ExperimentConfig,
};
use weightnorm::harness::experiment::write_rows;
use weightnorm::network::{build_model, check_gradients, Activation, Layer, LayerSpec, NormMode, Weights};
use weightnorm::numerics::{sample_normal, RngStream};
use weightnorm::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "wnorm", version, about = "Weight normalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one (mode, lr) run and write its per-epoch CSV
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides `norm_mode`
        #[arg(long)]
        mode: Option<NormMode>,
        /// Learning rate (defaults to the first grid entry)
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also save the trained model here
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every mode at every grid learning rate
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Gradient covariance and alignment of weight-normalized units
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Model to analyze (a freshly initialized one when omitted)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Probe examples for per-example gradients
        #[arg(long, default_value_t = 128)]
        probe: usize,
        /// Units analyzed per layer
        #[arg(long, default_value_t = 4)]
        units: usize,
    },
    /// Finite-difference check of all five parameterizations
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(std::fs::File::create(p)?)
        }
        None => Box::new(io::stdout()),
    })
}

fn write_csv<T: Serialize>(path: &Option<PathBuf>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

fn train(
    common: Common,
    mode: Option<NormMode>,
    lr: Option<f64>,
    epochs: Option<usize>,
    checkpoint: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(m) = mode {
        cfg.norm_mode = m;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = lr {
        cfg.lr_grid = vec![lr];
    }
    cfg.validate()?;
    let data = load_dataset(&cfg)?;
    let (record, model) = train_run(&cfg, &data, cfg.norm_mode, cfg.lr_grid[0])?;
    write_rows(output(&cfg.output)?, &record.rows)?;
    if let Some(path) = checkpoint {
        save_checkpoint(&path, &model)?;
    }
    if let Some((epoch, detail)) = record.diverged {
        return Err(Error::Divergence { epoch, detail });
    }
    if let Some(last) = record.rows.last() {
        eprintln!(
            "{} lr={} epochs={} train_error={:.4} test_error={:.4}",
            record.mode, record.lr, last.epoch, last.train_error, last.test_error
        );
    }
    Ok(())
}

fn compare(common: Common, epochs: Option<usize>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let to_stdout = cfg.output.is_none();
    let cmp = compare_parameterizations(&cfg)?;
    if to_stdout {
        cmp.write_long_csv(io::stdout())?;
    }
    for s in cmp.summary() {
        let lr = s.best_lr.map_or("-".into(), |l| l.to_string());
        let reach = s.epochs_to_threshold.map_or("never".into(), |e| e.to_string());
        eprintln!(
            "{:<26} best_lr={lr:<7} epochs_to_{}={reach:<6} diverged={}/{}",
            s.mode.name(),
            cmp.threshold,
            s.diverged_runs,
            s.runs
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeRow {
    layer: usize,
    unit: usize,
    alignment: f64,
    top_eigenvalue: f64,
    projected_top_eigenvalue: f64,
    g: f64,
    v_norm: f64,
    g_over_v: f64,
}

fn analyze(common: Common, checkpoint: Option<PathBuf>, probe: usize, units: usize) -> Result<()> {
    let cfg = load_config(&common)?;
    let data = load_dataset(&cfg)?;
    let model = match &checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => init_model(&cfg, &data, cfg.norm_mode)?,
    };
    let n = probe.min(data.train_len());
    let mut shape = vec![n];
    shape.extend_from_slice(model.input_shape());
    let per = data.train_x.len() / data.train_len();
    let x = Tensor::new(shape, data.train_x.data()[..n * per].to_vec())?;
    let labels = &data.train_y[..n];
    let mut rows = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let Layer::Affine(a) = layer else { continue };
        let Weights::Normalized(p) = &a.weights else { continue };
        let fan = p.fan_in();
        for unit in 0..units.min(p.units()) {
            let grads = per_example_weight_grads(&model, &x, labels, i, unit)?;
            let c = grad_covariance(&grads)?;
            let v = &p.v().data()[unit * fan..(unit + 1) * fan];
            let g = p.g().data()[unit];
            let (top, vec) = dominant_eigenvector(&c.c)?;
            let d = transformed_covariance(&c, v, g)?;
            let (ptop, _) = dominant_eigenvector(&d).unwrap_or((0.0, Vec::new()));
            let nv = p.norms()[unit];
            let alignment = weightnorm::numerics::tensor::dot(&vec, v).abs() / nv;
            rows.push(AnalyzeRow {
                layer: i,
                unit,
                alignment,
                top_eigenvalue: top,
                projected_top_eigenvalue: ptop,
                g,
                v_norm: nv,
                g_over_v: g / nv,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("model has no weight-normalized layers to analyze".into()));
    }
    write_csv(&common.out, &rows)
}

#[derive(Serialize)]
struct GradcheckRow {
    mode: NormMode,
    coords: usize,
    max_rel_err: f64,
    fraction_within_tol: f64,
}

fn gradcheck(common: Common, h: f64, tol: f64) -> Result<()> {
    let seed = common.seed.unwrap_or(0);
    let (modes, probe) = match &common.config {
        Some(_) => {
            let cfg = load_config(&common)?;
            let data = load_dataset(&cfg)?;
            let n = 8.min(data.train_len());
            let per = data.train_x.len() / data.train_len();
            let mut shape = vec![n];
            shape.extend_from_slice(data.example_shape());
            let x = Tensor::new(shape, data.train_x.data()[..n * per].to_vec())?;
            (cfg.modes.clone(), Some((cfg, data, x)))
        }
        None => (NormMode::ALL.to_vec(), None),
    };
    let mut rows = Vec::new();
    for mode in modes {
        let (mut model, x, labels) = match &probe {
            Some((cfg, data, x)) => {
                let (input, specs) = cfg.model_specs(mode, data.example_shape(), data.classes)?;
                let mut shape = vec![x.shape()[0]];
                shape.extend_from_slice(&input);
                let m = build_model(&input, &specs, RngStream::new(seed))?;
                (m, x.clone().reshape(&shape)?, data.train_y[..x.shape()[0]].to_vec())
            }
            None => {
                let specs = [
                    LayerSpec::dense(6, 16, mode, Activation::leaky()),
                    LayerSpec::dense(16, 16, mode, Activation::leaky()),
                    LayerSpec::dense(16, 4, mode, Activation::Identity),
                ];
                let m = build_model(&[6], &specs, RngStream::new(seed))?;
                let x = sample_normal(&mut RngStream::new(seed).derive(1), &[8, 6], 0.0, 1.0);
                (m, x, (0..8).map(|i| i % 4).collect())
            }
        };
        model.data_dependent_init(&x, weightnorm::normalization::INIT_EPS)?;
        let report = check_gradients(&model, &x, &labels, h)?;
        rows.push(GradcheckRow {
            mode,
            coords: report.coords.len(),
            max_rel_err: report.max_rel_err(),
            fraction_within_tol: report.fraction_within(tol),
        });
    }
    write_csv(&common.out, &rows)?;
    if let Some(bad) = rows.iter().find(|r| r.fraction_within_tol < 0.99 || r.max_rel_err > 10.0 * tol) {
        return Err(Error::Divergence {
            epoch: 0,
            detail: format!("gradient check failed for {} (max rel err {:e})", bad.mode, bad.max_rel_err),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train {
            common,
            mode,
            lr,
            epochs,
            checkpoint,
        } => train(common, mode, lr, epochs, checkpoint),
        Command::Compare { common, epochs } => compare(common, epochs),
        Command::Analyze {
            common,
            checkpoint,
            probe,
            units,
        } => analyze(common, checkpoint, probe, units),
        Command::Gradcheck { common, h, tol } => gradcheck(common, h, tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
