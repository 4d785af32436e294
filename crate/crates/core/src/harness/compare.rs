//! The mode × learning-rate grid and its summaries.

use std::io::Write;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{create_file, load_dataset, train_run, write_rows, Dataset, RunRecord};
use crate::error::{Error, Result};
use crate::network::NormMode;

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<RunRecord>,
    pub threshold: f64,
}

/// Best learning rate of one mode and what it achieved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: NormMode,
    pub best_lr: Option<f64>,
    pub epochs_to_threshold: Option<usize>,
    pub final_train_error: Option<f64>,
    pub final_test_error: Option<f64>,
    pub runs: usize,
    pub diverged_runs: usize,
    pub loss_decreasing_runs: usize,
}

/// Ranks a run: reaching the threshold sooner wins, then lower final train
/// error, then lower final train loss. Diverged runs never win.
fn rank_key(run: &RunRecord, threshold: f64) -> Option<(usize, f64, f64)> {
    if run.is_diverged() {
        return None;
    }
    Some((
        run.epochs_to(threshold).unwrap_or(usize::MAX),
        run.final_train_error()?,
        run.final_train_loss()?,
    ))
}

impl Comparison {
    pub fn runs_for(&self, mode: NormMode) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.mode == mode)
    }

    pub fn best_run(&self, mode: NormMode) -> Option<&RunRecord> {
        self.runs_for(mode)
            .filter_map(|r| rank_key(r, self.threshold).map(|k| (k, r)))
            .min_by(|(a, _), (b, _)| a.partial_cmp(b).expect("finite metrics"))
            .map(|(_, r)| r)
    }

    pub fn summary(&self) -> Vec<ModeSummary> {
        let mut modes: Vec<NormMode> = Vec::new();
        for r in &self.runs {
            if !modes.contains(&r.mode) {
                modes.push(r.mode);
            }
        }
        modes
            .into_iter()
            .map(|mode| {
                let best = self.best_run(mode);
                ModeSummary {
                    mode,
                    best_lr: best.map(|r| r.lr),
                    epochs_to_threshold: best.and_then(|r| r.epochs_to(self.threshold)),
                    final_train_error: best.and_then(|r| r.final_train_error()),
                    final_test_error: best.and_then(|r| r.rows.last().map(|x| x.test_error)),
                    runs: self.runs_for(mode).count(),
                    diverged_runs: self.runs_for(mode).filter(|r| r.is_diverged()).count(),
                    loss_decreasing_runs: self.runs_for(mode).filter(|r| r.is_loss_decreasing()).count(),
                }
            })
            .collect()
    }

    /// Long format: every epoch of every run.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, self.runs.iter().flat_map(|r| &r.rows))
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in self.summary() {
            w.serialize(s).map_err(|e| Error::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every configured mode at every learning rate from the same seed.
pub fn compare_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<Comparison> {
    let mut runs = Vec::with_capacity(cfg.modes.len() * cfg.lr_grid.len());
    for &mode in &cfg.modes {
        for &lr in &cfg.lr_grid {
            runs.push(train_run(cfg, data, mode, lr)?.0);
        }
    }
    Ok(Comparison {
        runs,
        threshold: cfg.error_threshold,
    })
}

/// Loads the data, runs the grid and writes `output` plus `output_summary`.
pub fn compare_parameterizations(cfg: &ExperimentConfig) -> Result<Comparison> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let cmp = compare_on(cfg, &data)?;
    if let Some(path) = &cfg.output {
        cmp.write_long_csv(create_file(path)?)?;
        let summary = cfg.output_with_suffix("_summary").expect("output is set");
        cmp.write_summary_csv(create_file(&summary)?)?;
    }
    Ok(cmp)
}
