//! Reproducible study runners: robustness to rotation shifts, group maps
//! with Mondrian calibration, the double-shift κ sweep, and an exchangeable
//! coverage sanity check.
//!
//! Every run writes into `output_dir`:
//! - `manifest.json`: config echo, library version and trial seeds.
//! - `<variant>/trials/trial_NNNN.csv`, merged into `<variant>/results.csv`.
//! - `summary.json`: mean and standard deviation per cell.

mod config;
mod double_shift;
mod group_map;
mod pipeline;
mod results;
mod robustness;
mod sanity;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{
    CanonicalizerConfig, DataConfig, DoubleShiftConfig, ExperimentConfig, GroupMapConfig, Method,
    PredictorConfig, RobustnessConfig, SanityConfig, Study,
};
pub use double_shift::{run_double_shift, spearman, DoubleShiftReport};
pub use group_map::{run_group_map, GroupMapReport, GroupMapTrial};
pub use pipeline::{
    canon_training_data, evaluate_dataset, predictor_training_data, prepare_canonicalizer,
    prepare_predictor, run_method, stream, stream_seed, trial_data, trial_seed, Evaluated,
    MethodOutcome, MethodSettings,
};
pub use results::{
    mean_sd, merge_trial_files, read_rows, summarize, write_rows, ResultRow, SummaryRow,
};
pub use robustness::{run_robustness, RobustnessReport};
pub use sanity::{run_coverage_sanity, SanityReport};

use crate::error::Result;
use results::{write_json, Manifest, SEED_DERIVATION};

/// Outcome of any study, for callers that only need the tables.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub summary: Vec<SummaryRow>,
    pub output_dir: PathBuf,
}

/// Run the study named in the config.
pub fn run(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let summary = match cfg.study {
        Study::Robustness => run_robustness(cfg)?.summary,
        Study::GroupMap => run_group_map(cfg)?.summary,
        Study::DoubleShift => run_double_shift(cfg)?.summary,
        Study::CoverageSanity => run_coverage_sanity(cfg)?.summary,
    };
    Ok(StudyOutput {
        summary,
        output_dir: cfg.output_dir.clone(),
    })
}

fn trial_path(out: &Path, variant: &str, trial: usize) -> PathBuf {
    out.join(variant)
        .join("trials")
        .join(format!("trial_{trial:04}.csv"))
}

/// Run `trial` for every trial index in parallel. Each trial's rows per
/// variant go to their own file; the files are then merged in trial order.
fn run_trials<F>(
    cfg: &ExperimentConfig,
    variants: &[String],
    trial: F,
) -> Result<Vec<(String, Vec<ResultRow>)>>
where
    F: Fn(usize) -> Result<Vec<(String, Vec<ResultRow>)>> + Sync,
{
    let out = &cfg.output_dir;
    (0..cfg.trials).into_par_iter().try_for_each(|t| {
        for (variant, rows) in trial(t)? {
            write_rows(&trial_path(out, &variant, t), &rows)?;
        }
        Ok::<(), crate::Error>(())
    })?;
    variants
        .iter()
        .map(|v| {
            let parts: Vec<PathBuf> = (0..cfg.trials).map(|t| trial_path(out, v, t)).collect();
            let rows = merge_trial_files(&parts, &out.join(v).join("results.csv"))?;
            Ok((v.clone(), rows))
        })
        .collect()
}

fn finish(
    cfg: &ExperimentConfig,
    tables: &[(String, Vec<ResultRow>)],
    mut outputs: Vec<String>,
) -> Result<Vec<SummaryRow>> {
    let summary: Vec<SummaryRow> = tables
        .iter()
        .flat_map(|(v, rows)| summarize(v, rows))
        .collect();
    write_json(&cfg.output_dir.join("summary.json"), &summary)?;
    for (v, _) in tables {
        outputs.push(format!("{v}/results.csv"));
    }
    outputs.push("summary.json".into());
    let manifest = Manifest {
        study: cfg.study.to_string(),
        library_version: env!("CARGO_PKG_VERSION"),
        seed_derivation: SEED_DERIVATION,
        trial_seeds: (0..cfg.trials).map(|t| trial_seed(cfg, t)).collect(),
        config: cfg,
        outputs,
    };
    write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}

/// Marginal row plus optional per-partition rows for one method outcome.
#[allow(clippy::too_many_arguments)]
fn result_rows(
    trial: usize,
    method: Method,
    cfg: &ExperimentConfig,
    shift: &str,
    kappa: Option<f64>,
    metrics: &crate::conformal::Metrics,
    quantile: f64,
    partition_prefix: &str,
) -> Vec<ResultRow> {
    let base = ResultRow {
        trial,
        method,
        score_fn: cfg.score_fn.tag().to_string(),
        alpha: cfg.alpha,
        shift: shift.to_string(),
        kappa,
        coverage: metrics.coverage,
        mean_set_size: metrics.mean_set_size,
        accuracy: metrics.accuracy,
        partition: None,
        quantile,
    };
    let mut rows = vec![base.clone()];
    for p in metrics.per_partition.iter().flatten() {
        rows.push(ResultRow {
            coverage: p.coverage,
            mean_set_size: p.mean_set_size,
            accuracy: None,
            partition: Some(format!("{partition_prefix}:{}", p.partition)),
            ..base.clone()
        });
    }
    rows
}
