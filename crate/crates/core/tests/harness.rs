use weightnorm::harness::{
    compare_parameterizations, load_dataset, run_experiment, train_run, ExperimentConfig, Schedule, CSV_HEADER,
};
use weightnorm::network::NormMode;
use weightnorm::optim::OptimizerKind;
use weightnorm::Error;

fn synth_config(epochs: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "dataset": {{"type": "synthetic",
                         "train": {{"n": 200, "dim": 6, "classes": 3, "separation": 2.5}},
                         "test_n": 100}},
            "model": {{"mlp": [16]}},
            "lr_grid": [0.01],
            "epochs": {epochs},
            "batch_size": 20,
            "init_batch_size": 50,
            "seed": 5
        }}"#
    ))
    .unwrap()
}

#[test]
fn one_epoch_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth_config(1);
    cfg.output = Some(dir.path().join("out/run.csv"));
    let record = run_experiment(&cfg).unwrap();
    assert_eq!(record.rows.len(), 1);
    let text = std::fs::read_to_string(cfg.output.unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("weight_norm,0.01,1,"));
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for i in 0..2 {
        let mut cfg = synth_config(3);
        cfg.norm_mode = NormMode::BatchNorm;
        cfg.output = Some(dir.path().join(format!("{i}.csv")));
        run_experiment(&cfg).unwrap();
        let t = std::fs::read_to_string(cfg.output.unwrap()).unwrap();
        let stripped: Vec<String> = t.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect();
        texts.push(stripped);
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn weight_norm_training_reduces_error() {
    let cfg = synth_config(30);
    let data = load_dataset(&cfg).unwrap();
    let (record, _) = train_run(&cfg, &data, NormMode::WeightNorm, 0.01).unwrap();
    assert!(!record.is_diverged());
    assert!(record.final_train_error().unwrap() < record.initial_train_error);
    assert!(record.is_loss_decreasing());
}

#[test]
fn every_mode_and_optimizer_trains() {
    let data = load_dataset(&synth_config(1)).unwrap();
    for optimizer in [
        OptimizerKind::Sgd,
        OptimizerKind::Momentum { momentum: 0.9 },
        OptimizerKind::Adam,
        OptimizerKind::Adamax,
    ] {
        for mode in NormMode::ALL {
            let cfg = ExperimentConfig {
                optimizer,
                schedule: Schedule::Constant,
                ..synth_config(5)
            };
            let (record, _) = train_run(&cfg, &data, mode, 0.01).unwrap();
            assert_eq!(record.rows.len(), 5);
            assert!(record.is_loss_decreasing(), "{mode} {optimizer:?}");
        }
    }
}

#[test]
fn grid_of_four_rates_and_five_modes_gives_twenty_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth_config(2);
    cfg.lr_grid = vec![0.0003, 0.001, 0.003, 0.01];
    cfg.output = Some(dir.path().join("cmp.csv"));
    let cmp = compare_parameterizations(&cfg).unwrap();
    assert_eq!(cmp.runs.len(), 20);
    let long = std::fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 20 * 2);
    let summary = std::fs::read_to_string(dir.path().join("cmp_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 5);
    assert!(summary.starts_with("mode,best_lr,epochs_to_threshold"));
}

#[test]
fn single_cell_grid_matches_single_run() {
    let mut cfg = synth_config(3);
    cfg.modes = vec![NormMode::WeightNorm];
    let cmp = compare_parameterizations(&cfg).unwrap();
    let single = run_experiment(&cfg).unwrap();
    assert_eq!(cmp.runs.len(), 1);
    let strip = |r: &weightnorm::harness::RunRecord| -> Vec<_> {
        r.rows.iter().map(|x| (x.epoch, x.train_loss, x.test_error, x.v_norm)).collect()
    };
    assert_eq!(strip(&cmp.runs[0]), strip(&single));
}

#[test]
fn divergence_is_recorded_not_fatal_in_grid() {
    let mut cfg = synth_config(3);
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.schedule = Schedule::Constant;
    cfg.modes = vec![NormMode::Standard];
    cfg.lr_grid = vec![1e300, 0.01];
    let cmp = compare_parameterizations(&cfg).unwrap();
    assert!(cmp.runs[0].is_diverged());
    assert!(!cmp.runs[1].is_diverged());
    let s = &cmp.summary()[0];
    assert_eq!((s.diverged_runs, s.best_lr), (1, Some(0.01)));
    match run_experiment(&ExperimentConfig {
        lr_grid: vec![1e300],
        norm_mode: NormMode::Standard,
        ..cfg
    }) {
        Err(e @ Error::Divergence { .. }) => assert_eq!(e.exit_code(), 3),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn missing_idx_file_is_a_data_error() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "dataset": {"type": "idx", "train_images": "/nonexistent/a", "train_labels": "/nonexistent/b",
                        "test_images": "/nonexistent/c", "test_labels": "/nonexistent/d"},
            "model": "mnist-mlp",
            "epochs": 1
        }"#,
    )
    .unwrap();
    let err = load_dataset(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn mnist_subset_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mnist-mlp.json");
    let mut cfg = ExperimentConfig::from_file(&path).unwrap();
    if let weightnorm::harness::DatasetConfig::Idx { subset, .. } = &mut cfg.dataset {
        *subset = Some(300);
    }
    let data = load_dataset(&cfg).unwrap();
    assert_eq!(data.train_x.shape(), &[300, 28, 28]);
    assert_eq!(data.classes, 10);
    let mut counts = [0usize; 10];
    data.train_y.iter().for_each(|&y| counts[y] += 1);
    assert!(counts.iter().all(|&c| c == 30));
    assert!(data.train_x.data().iter().all(|p| (0.0..=1.0).contains(p)));
}
