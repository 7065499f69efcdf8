use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GridImage;

/// Slack on the rank threshold so that, e.g., `(9 + 1)·0.9` counts as 9.
const RANK_TOL: f64 = 1e-12;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid("score set is empty"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("calibration scores must be finite"));
    }
    Ok(())
}

/// Rank of the conformal quantile among `n` sorted scores, 1-based.
pub fn conformal_rank(n: usize, alpha: f64) -> usize {
    ((n + 1) as f64 * ((1.0 - alpha) - RANK_TOL))
        .ceil()
        .max(1.0) as usize
}

/// The `⌈(n+1)(1−α)⌉`-th smallest score, or `+∞` when that rank exceeds `n`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    check_scores(scores)?;
    check_alpha(alpha)?;
    let k = conformal_rank(scores.len(), alpha);
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Normalized calibration weights plus the weight of the test point, which
/// sits on `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    calibration: Vec<f64>,
    test: f64,
}

impl WeightVector {
    pub fn new(calibration: Vec<f64>, test: f64) -> Result<Self> {
        if calibration
            .iter()
            .chain(std::iter::once(&test))
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total = calibration.iter().sum::<f64>() + test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { calibration, test })
    }

    pub fn from_unnormalized(calibration: Vec<f64>, test: f64) -> Result<Self> {
        let total = calibration.iter().sum::<f64>() + test;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid(format!(
                "weight total must be positive, got {total}"
            )));
        }
        Self::new(
            calibration.into_iter().map(|w| w / total).collect(),
            test / total,
        )
    }

    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / (n + 1) as f64;
        Self {
            calibration: vec![w; n],
            test: w,
        }
    }

    pub fn calibration(&self) -> &[f64] {
        &self.calibration
    }

    pub fn test(&self) -> f64 {
        self.test
    }

    pub fn len(&self) -> usize {
        self.calibration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calibration.is_empty()
    }

    /// Kish effective sample size of the calibration weights.
    pub fn effective_size(&self) -> f64 {
        let s: f64 = self.calibration.iter().sum();
        let s2: f64 = self.calibration.iter().map(|w| w * w).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s * s / s2
        }
    }
}

/// `(1−α)`-quantile of `Σ w_i δ(s_i) + w_test δ(+∞)`, aggregating mass per
/// distinct score.
pub fn weighted_quantile(scores: &[f64], weights: &WeightVector, alpha: f64) -> Result<f64> {
    check_scores(scores)?;
    check_alpha(alpha)?;
    if weights.len() != scores.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} scores",
            weights.len(),
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let target = (1.0 - alpha) - RANK_TOL;
    let mut cum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            cum += weights.calibration[order[i]];
            i += 1;
        }
        if cum >= target {
            return Ok(s);
        }
    }
    Ok(f64::INFINITY)
}

/// Weights `exp(−h·‖x_i − x_test‖₂)` with the test point at weight 1.
pub fn kernel_weights<'a>(
    x_cal: impl IntoIterator<Item = &'a GridImage>,
    x_test: &GridImage,
    bandwidth: f64,
) -> Result<WeightVector> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let raw = x_cal
        .into_iter()
        .map(|x| {
            if x.side() != x_test.side() {
                return Err(Error::invalid("calibration and test images differ in side"));
            }
            Ok((-bandwidth * x.l2_distance(x_test)).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    WeightVector::from_unnormalized(raw, 1.0)
}
