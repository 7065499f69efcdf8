//! Partition-conditional rotation shifts: true against recovered group maps,
//! and split against Mondrian calibration per group and per class.

use std::sync::Mutex;

use super::config::{ExperimentConfig, Method};
use super::pipeline::{
    evaluate_dataset, metrics, prepare_canonicalizer, prepare_predictor, run_method, stream,
    stream_seed, trial_data, trial_seed, MethodSettings,
};
use super::results::{ResultRow, SummaryRow};
use super::{finish, result_rows, run_trials};
use crate::conformal::Partitioner;
use crate::data::{apply_shift, Split};
use crate::diagnostics::{
    emit_group_map_plot, group_map_from_posteriors, true_group_map, Assignment, GroupMap,
};
use crate::error::{Error, Result};
use crate::model::{Canonicalizer, Classifier, TrainReport};

pub const VARIANT: &str = "group-map";

/// Diagnostics of one trial's test set.
#[derive(Debug, Clone)]
pub struct GroupMapTrial {
    pub trial: usize,
    pub true_map: GroupMap,
    pub recovered_map: GroupMap,
    /// Fraction of rows defined in both maps whose argmax elements agree.
    pub agreement: f64,
    /// Identity frequency per recovered row; `None` for undefined rows.
    pub identity_frequency: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct GroupMapReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub trials: Vec<GroupMapTrial>,
    pub training: Vec<(String, TrainReport)>,
}

/// Fraction of rows defined in both maps with the same argmax element.
pub fn argmax_agreement(a: &GroupMap, b: &GroupMap) -> Result<f64> {
    if a.num_partitions() != b.num_partitions() || a.group() != b.group() {
        return Err(Error::invalid("group maps have different shapes"));
    }
    let (mut agree, mut defined) = (0usize, 0usize);
    for k in 0..a.num_partitions() {
        if let (Some(x), Some(y)) = (a.row_argmax(k), b.row_argmax(k)) {
            defined += 1;
            agree += usize::from(x == y);
        }
    }
    if defined == 0 {
        return Err(Error::invalid("no row is defined in both maps"));
    }
    Ok(agree as f64 / defined as f64)
}

fn trial_rows(
    cfg: &ExperimentConfig,
    clf: &Classifier,
    cn: &Canonicalizer,
    t: usize,
) -> Result<(Vec<ResultRow>, GroupMapTrial)> {
    let ts = trial_seed(cfg, t);
    let group = cfg.group;
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
    let cal = apply_shift(
        &cal0,
        &cfg.calibration_shift,
        group,
        stream_seed(ts, stream::CAL_SHIFT),
    )?;
    let test = apply_shift(
        &test0,
        &cfg.test_shift,
        group,
        stream_seed(ts, stream::TEST_SHIFT),
    )?;

    let gm = &cfg.group_map;
    let decode = cfg.canonicalizer.decode;
    let ev_cal = evaluate_dataset(clf, Some(cn), gm.canonicalize, decode, &cal)?;
    let ev_test = evaluate_dataset(clf, Some(cn), gm.canonicalize, decode, &test)?;
    let test_post = ev_test
        .posteriors
        .as_deref()
        .expect("canonicalizer supplies posteriors");

    let k = cfg.data.num_classes.max(test.num_partitions());
    let assignment = match gm.assignment {
        Assignment::Argmax => Assignment::Argmax,
        Assignment::Sample { seed } => Assignment::Sample {
            seed: stream_seed(ts, stream::GROUP_MAP) ^ seed,
        },
    };
    let recovered = group_map_from_posteriors(
        test_post,
        &ev_test.partition_field,
        k,
        assignment,
        gm.conf_threshold,
    )?;
    let truth = true_group_map(&test, group, &Partitioner::ByPartitionField)?;
    let truth = pad_rows(truth, k)?;
    let identity = group.identity().index() as usize;
    let diag = GroupMapTrial {
        trial: t,
        agreement: argmax_agreement(&truth, &recovered)?,
        identity_frequency: (0..k)
            .map(|p| recovered.frequencies(p).map(|f| f[identity]))
            .collect(),
        true_map: truth,
        recovered_map: recovered,
    };

    let settings = MethodSettings {
        score_fn: cfg.score_fn,
        alpha: cfg.alpha,
        partitioner: &gm.partitioner,
        weights: &cfg.weights,
    };
    let group_ids: Vec<usize> = test_post
        .iter()
        .map(|p| p.argmax().index() as usize)
        .collect();
    let shift = cfg.test_shift.tag();
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let outcome = run_method(method, &ev_cal, &ev_test, &settings, ts)?;
        let by_group = metrics(&outcome, &ev_test, Some(&group_ids))?;
        rows.extend(result_rows(
            t,
            method,
            cfg,
            shift,
            None,
            &by_group,
            outcome.quantile,
            "group",
        ));
        let by_class = metrics(&outcome, &ev_test, Some(&ev_test.labels))?;
        rows.extend(
            result_rows(
                t,
                method,
                cfg,
                shift,
                None,
                &by_class,
                outcome.quantile,
                "class",
            )
            .into_iter()
            .skip(1),
        );
        if method == Method::Mcp && gm.partitioner != Partitioner::ByGroupArgmax {
            if let Some(cells) = &outcome.test_partitions {
                let by_cell = metrics(&outcome, &ev_test, Some(cells))?;
                rows.extend(
                    result_rows(
                        t,
                        method,
                        cfg,
                        shift,
                        None,
                        &by_cell,
                        outcome.quantile,
                        "cell",
                    )
                    .into_iter()
                    .skip(1),
                );
            }
        }
    }
    Ok((rows, diag))
}

/// Rebuild a map with at least `k` rows, so both maps share a shape.
fn pad_rows(map: GroupMap, k: usize) -> Result<GroupMap> {
    if map.num_partitions() >= k {
        return Ok(map);
    }
    let group = map.group();
    let mut posts = Vec::new();
    let mut parts = Vec::new();
    for p in 0..map.num_partitions() {
        for (g, &c) in map.counts(p).iter().enumerate() {
            let e = group.element(g as u32)?;
            for _ in 0..c {
                posts.push(crate::model::GroupDistribution::point_mass(e));
                parts.push(p);
            }
        }
    }
    group_map_from_posteriors(&posts, &parts, k, Assignment::Argmax, 0.0)
}

/// Maps of trial 0 are written to `maps/true.pgm` and `maps/recovered.pgm`,
/// each with a `.csv` twin.
pub fn run_group_map(cfg: &ExperimentConfig) -> Result<GroupMapReport> {
    cfg.validate()?;
    let mut training = Vec::new();
    let (clf, r) = prepare_predictor(cfg)?;
    if let Some(r) = r {
        training.push(("predictor".to_string(), r));
    }
    let (cn, r) = prepare_canonicalizer(cfg, cfg.group)?;
    if let Some(r) = r {
        training.push((format!("cn{}", cfg.group.order()), r));
    }
    let diags = Mutex::new(Vec::new());
    let tables = run_trials(cfg, &[VARIANT.to_string()], |t| {
        let (rows, diag) = trial_rows(cfg, &clf, &cn, t)?;
        diags.lock().expect("no panics while held").push(diag);
        Ok(vec![(VARIANT.to_string(), rows)])
    })?;
    let mut trials = diags.into_inner().expect("no panics while held");
    trials.sort_by_key(|d| d.trial);
    let maps = cfg.output_dir.join("maps");
    emit_group_map_plot(&trials[0].true_map, &maps.join("true.pgm"))?;
    emit_group_map_plot(&trials[0].recovered_map, &maps.join("recovered.pgm"))?;
    let outputs = ["true.pgm", "true.csv", "recovered.pgm", "recovered.csv"]
        .iter()
        .map(|f| format!("maps/{f}"))
        .collect();
    let summary = finish(cfg, &tables, outputs)?;
    Ok(GroupMapReport {
        rows: tables
            .into_iter()
            .next()
            .map(|(_, r)| r)
            .unwrap_or_default(),
        summary,
        trials,
        training,
    })
}
