//! Base predictor against canonicalized variants, under uniform rotation
//! shifts of increasing size.

use std::collections::BTreeMap;

use super::config::{ExperimentConfig, Method};
use super::pipeline::{
    evaluate_dataset, metrics, prepare_canonicalizer, prepare_predictor, run_method, stream,
    stream_seed, trial_data, trial_seed, MethodSettings,
};
use super::results::{ResultRow, SummaryRow};
use super::{finish, result_rows, run_trials};
use crate::data::{apply_shift, ShiftSpec, Split};
use crate::error::Result;
use crate::group::CyclicGroup;
use crate::model::{Canonicalizer, Classifier, TrainReport};

#[derive(Debug, Clone)]
pub struct RobustnessReport {
    /// Rows per variant: `base`, then `cn<order>` per canonicalizer group.
    pub rows: BTreeMap<String, Vec<ResultRow>>,
    pub summary: Vec<SummaryRow>,
    /// Training logs of the models trained for this run, by variant.
    pub training: Vec<(String, TrainReport)>,
}

/// Shift label used in result rows: `none`, `c4`, `c8`, ...
pub fn shift_label(g: CyclicGroup) -> String {
    if g.order() == 1 {
        "none".into()
    } else {
        format!("c{}", g.order())
    }
}

fn shifted(d: &crate::data::Dataset, g: CyclicGroup, seed: u64) -> Result<crate::data::Dataset> {
    let spec = if g.order() == 1 {
        ShiftSpec::None
    } else {
        ShiftSpec::Uniform
    };
    apply_shift(d, &spec, g, seed)
}

fn trial_rows(
    cfg: &ExperimentConfig,
    clf: &Classifier,
    variants: &[(String, Option<Canonicalizer>)],
    t: usize,
) -> Result<Vec<(String, Vec<ResultRow>)>> {
    let ts = trial_seed(cfg, t);
    let cal0 = trial_data(
        cfg,
        stream_seed(ts, stream::CAL_DATA),
        cfg.data.cal_count,
        Split::Calibration,
    )?;
    let test0 = trial_data(
        cfg,
        stream_seed(ts, stream::TEST_DATA),
        cfg.data.test_count,
        Split::Test,
    )?;
    let settings = MethodSettings {
        score_fn: cfg.score_fn,
        alpha: cfg.alpha,
        partitioner: &cfg.group_map.partitioner,
        weights: &cfg.weights,
    };
    let mut out: Vec<(String, Vec<ResultRow>)> = variants
        .iter()
        .map(|(v, _)| (v.clone(), Vec::new()))
        .collect();
    for &sg in &cfg.robustness.shift_groups {
        let cal = shifted(&cal0, sg, stream_seed(ts, stream::CAL_SHIFT))?;
        let test = shifted(&test0, sg, stream_seed(ts, stream::TEST_SHIFT))?;
        let label = shift_label(sg);
        for ((_, cn), (_, rows)) in variants.iter().zip(out.iter_mut()) {
            let decode = cfg.canonicalizer.decode;
            let ev_cal = evaluate_dataset(clf, cn.as_ref(), true, decode, &cal)?;
            let ev_test = evaluate_dataset(clf, cn.as_ref(), true, decode, &test)?;
            for &method in &cfg.methods {
                if method != Method::Scp && cn.is_none() {
                    // mcp and wcp need group posteriors
                    continue;
                }
                let outcome = run_method(method, &ev_cal, &ev_test, &settings, ts)?;
                let m = metrics(&outcome, &ev_test, outcome.test_partitions.as_deref())?;
                rows.extend(result_rows(
                    t,
                    method,
                    cfg,
                    &label,
                    None,
                    &m,
                    outcome.quantile,
                    "group",
                ));
            }
        }
    }
    Ok(out)
}

/// Run every variant on the same calibration and test draws per trial.
pub fn run_robustness(cfg: &ExperimentConfig) -> Result<RobustnessReport> {
    cfg.validate()?;
    let (clf, clf_report) = prepare_predictor(cfg)?;
    let mut training = Vec::new();
    if let Some(r) = clf_report {
        training.push(("base".to_string(), r));
    }
    let mut variants: Vec<(String, Option<Canonicalizer>)> = vec![("base".into(), None)];
    for &g in &cfg.robustness.cn_groups {
        let name = format!("cn{}", g.order());
        let (cn, report) = prepare_canonicalizer(cfg, g)?;
        if let Some(r) = report {
            training.push((name.clone(), r));
        }
        variants.push((name, Some(cn)));
    }
    let names: Vec<String> = variants.iter().map(|(v, _)| v.clone()).collect();
    let tables = run_trials(cfg, &names, |t| trial_rows(cfg, &clf, &variants, t))?;
    let summary = finish(cfg, &tables, Vec::new())?;
    Ok(RobustnessReport {
        rows: tables.into_iter().collect(),
        summary,
        training,
    })
}
