//! Double shift: calibration rotated within the canonicalizer's group, test
//! poses drawn from a von Mises mixture around that group at each κ.

use super::config::{ExperimentConfig, Method};
use super::pipeline::{
    evaluate_dataset, metrics, prepare_canonicalizer, prepare_predictor, run_method, stream,
    stream_seed, trial_data, trial_seed, MethodSettings,
};
use super::results::{mean_sd, ResultRow, SummaryRow};
use super::{finish, result_rows, run_trials};
use crate::data::{apply_shift, ShiftSpec, Split};
use crate::error::{Error, Result};
use crate::model::TrainReport;

pub const VARIANT: &str = "double-shift";

#[derive(Debug, Clone)]
pub struct DoubleShiftReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Per method, Spearman correlation between shift severity (falling κ,
    /// in schedule order) and mean coverage.
    pub coverage_trend: Vec<(Method, f64)>,
    /// Per κ, mean over trials of the paired wcp minus scp coverage, when
    /// both methods ran.
    pub paired_gap: Vec<(f64, f64)>,
    pub training: Vec<(String, TrainReport)>,
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share their average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "spearman needs two equal-length series of length >= 2",
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_sd(&rx);
    let (my, _) = mean_sd(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn trial_rows(
    cfg: &ExperimentConfig,
    clf: &crate::model::Classifier,
    cn: &crate::model::Canonicalizer,
    t: usize,
) -> Result<Vec<ResultRow>> {
    let ts = trial_seed(cfg, t);
    let ds = &cfg.double_shift;
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
        cfg.group,
        stream_seed(ts, stream::CAL_SHIFT),
    )?;
    let decode = cfg.canonicalizer.decode;
    let ev_cal = evaluate_dataset(clf, Some(cn), true, decode, &cal)?;
    let settings = MethodSettings {
        score_fn: cfg.score_fn,
        alpha: cfg.alpha,
        partitioner: &cfg.group_map.partitioner,
        weights: &cfg.weights,
    };
    let mut rows = Vec::new();
    for &kappa in &ds.kappas {
        // Same images and pose seed at every κ, so the sweep is paired.
        let spec = ShiftSpec::VonMisesMixture {
            centers: cfg.group,
            kappa,
        };
        let test = apply_shift(
            &test0,
            &spec,
            ds.test_group,
            stream_seed(ts, stream::TEST_SHIFT),
        )?;
        let ev_test = evaluate_dataset(clf, Some(cn), true, decode, &test)?;
        for &method in &cfg.methods {
            let outcome = run_method(method, &ev_cal, &ev_test, &settings, ts)?;
            let m = metrics(&outcome, &ev_test, None)?;
            rows.extend(result_rows(
                t,
                method,
                cfg,
                spec.tag(),
                Some(kappa),
                &m,
                outcome.quantile,
                "group",
            ));
        }
    }
    Ok(rows)
}

fn marginal_coverage(rows: &[ResultRow], method: Method, kappa: f64) -> Vec<(usize, f64)> {
    rows.iter()
        .filter(|r| r.partition.is_none() && r.method == method && r.kappa == Some(kappa))
        .map(|r| (r.trial, r.coverage))
        .collect()
}

pub fn run_double_shift(cfg: &ExperimentConfig) -> Result<DoubleShiftReport> {
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
    let tables = run_trials(cfg, &[VARIANT.to_string()], |t| {
        Ok(vec![(VARIANT.to_string(), trial_rows(cfg, &clf, &cn, t)?)])
    })?;
    let summary = finish(cfg, &tables, Vec::new())?;
    let rows = tables
        .into_iter()
        .next()
        .map(|(_, r)| r)
        .unwrap_or_default();

    let kappas = &cfg.double_shift.kappas;
    let severity: Vec<f64> = kappas.iter().map(|k| -k).collect();
    let mut coverage_trend = Vec::new();
    let mut methods = cfg.methods.clone();
    methods.dedup();
    if kappas.len() >= 2 {
        for &m in &methods {
            let means: Vec<f64> = kappas
                .iter()
                .map(|&k| {
                    let c: Vec<f64> = marginal_coverage(&rows, m, k)
                        .into_iter()
                        .map(|x| x.1)
                        .collect();
                    mean_sd(&c).0
                })
                .collect();
            coverage_trend.push((m, spearman(&severity, &means)?));
        }
    }
    let mut paired_gap = Vec::new();
    if methods.contains(&Method::Scp) && methods.contains(&Method::Wcp) {
        for &k in kappas {
            let scp = marginal_coverage(&rows, Method::Scp, k);
            let wcp = marginal_coverage(&rows, Method::Wcp, k);
            let diffs: Vec<f64> = scp
                .iter()
                .zip(&wcp)
                .map(|((ta, a), (tb, b))| {
                    debug_assert_eq!(ta, tb);
                    b - a
                })
                .collect();
            paired_gap.push((k, mean_sd(&diffs).0));
        }
    }
    Ok(DoubleShiftReport {
        rows,
        summary,
        coverage_trend,
        paired_gap,
        training,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]).unwrap(), 0.0);
        // ranks of [1, 2, 2, 3] are [1, 2.5, 2.5, 4]; Pearson on ranks against 1..4
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let expected = 4.5 / (4.5f64 * 5.0).sqrt();
        assert!((r - expected).abs() < 1e-12);
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }
}
