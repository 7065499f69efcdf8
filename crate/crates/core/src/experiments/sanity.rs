//! Exchangeable synthetic scores: marginal coverage, and the quantile
//! routines against brute-force rank oracles.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use super::config::{ExperimentConfig, Method};
use super::pipeline::{stream, trial_rng, trial_seed};
use super::results::{mean_sd, ResultRow, SummaryRow};
use super::{finish, run_trials};
use crate::conformal::{conformal_quantile, weighted_quantile, WeightVector};
use crate::error::Result;

pub const VARIANT: &str = "coverage-sanity";

#[derive(Debug, Clone)]
pub struct SanityReport {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Mean scp coverage over trials.
    pub mean_coverage: f64,
    /// Trials where a quantile routine disagreed with its oracle.
    pub oracle_mismatches: usize,
}

/// Smallest calibration score `s` with `#{s_i <= s} >= (1-α)(n+1)`, or +∞.
fn oracle_quantile(scores: &[f64], alpha: f64) -> f64 {
    let n = scores.len() as f64;
    let mut candidates = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates
        .into_iter()
        .find(|&s| {
            let below = scores.iter().filter(|&&x| x <= s).count() as f64;
            below >= (1.0 - alpha) * (n + 1.0) - 1e-9
        })
        .unwrap_or(f64::INFINITY)
}

fn coverage(test: &[f64], q: f64) -> f64 {
    test.iter().filter(|&&s| s <= q).count() as f64 / test.len() as f64
}

/// Scores are squared uniforms, i.i.d. across calibration and test. The
/// `scp` row uses the split quantile, the `wcp` row the weighted quantile
/// under uniform weights. Set sizes are not defined here and are recorded
/// as NaN.
pub fn run_coverage_sanity(cfg: &ExperimentConfig) -> Result<SanityReport> {
    cfg.validate()?;
    let mismatches = AtomicUsize::new(0);
    let tables = run_trials(cfg, &[VARIANT.to_string()], |t| {
        let ts = trial_seed(cfg, t);
        let mut rng = trial_rng(ts, stream::SYNTHETIC);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>().powi(2)).collect() };
        let cal = draw(cfg.sanity.cal_count);
        let test = draw(cfg.sanity.test_count);
        let q = conformal_quantile(&cal, cfg.alpha)?;
        let qw = weighted_quantile(&cal, &WeightVector::uniform(cal.len()), cfg.alpha)?;
        if q != oracle_quantile(&cal, cfg.alpha) || qw != q {
            mismatches.fetch_add(1, Ordering::Relaxed);
        }
        let row = |method, q| ResultRow {
            trial: t,
            method,
            score_fn: "synthetic".into(),
            alpha: cfg.alpha,
            shift: "none".into(),
            kappa: None,
            coverage: coverage(&test, q),
            mean_set_size: f64::NAN,
            accuracy: None,
            partition: None,
            quantile: q,
        };
        Ok(vec![(
            VARIANT.to_string(),
            vec![row(Method::Scp, q), row(Method::Wcp, qw)],
        )])
    })?;
    let summary = finish(cfg, &tables, Vec::new())?;
    let rows = tables
        .into_iter()
        .next()
        .map(|(_, r)| r)
        .unwrap_or_default();
    let scp: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == Method::Scp)
        .map(|r| r.coverage)
        .collect();
    Ok(SanityReport {
        mean_coverage: mean_sd(&scp).0,
        oracle_mismatches: mismatches.into_inner(),
        rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_small_cases() {
        // n = 4, α = 0.2: need 4 scores at or below q
        assert_eq!(oracle_quantile(&[0.4, 0.1, 0.3, 0.2], 0.2), 0.4);
        // α = 0.1 needs 4.5, more than n
        assert_eq!(oracle_quantile(&[0.4, 0.1, 0.3, 0.2], 0.1), f64::INFINITY);
        assert_eq!(oracle_quantile(&[0.4, 0.1, 0.3, 0.2], 0.5), 0.3);
    }
}
