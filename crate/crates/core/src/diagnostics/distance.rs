use serde::{Deserialize, Serialize};

use crate::conformal::WeightVector;
use crate::error::{Error, Result};
use crate::model::GroupDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    Kl,
    #[default]
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(default)]
    pub metric: DistanceMetric,
    /// Slope exponent `p` in `1 / (1 + D^p)`.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_exponent() -> f64 {
    2.0
}

fn default_epsilon() -> f64 {
    1e-6
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            metric: DistanceMetric::CrossEntropy,
            exponent: default_exponent(),
            epsilon: default_epsilon(),
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::config(format!(
                "exponent must be positive, got {}",
                self.exponent
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-3) {
            return Err(Error::config(format!(
                "epsilon must lie in (0, 1e-3], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn smooth(p: &[f64], eps: f64) -> Vec<f64> {
    let total: f64 = p.iter().sum::<f64>() + eps * p.len() as f64;
    p.iter().map(|v| (v + eps) / total).collect()
}

/// KL divergence or cross-entropy between `eps`-smoothed posteriors.
pub fn distribution_distance(
    p: &GroupDistribution,
    q: &GroupDistribution,
    metric: DistanceMetric,
    eps: f64,
) -> Result<f64> {
    if p.probs().len() != q.probs().len() {
        return Err(Error::invalid(format!(
            "distributions over {} and {} elements",
            p.probs().len(),
            q.probs().len()
        )));
    }
    let (ps, qs) = (smooth(p.probs(), eps), smooth(q.probs(), eps));
    let d: f64 = match metric {
        DistanceMetric::Kl => ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum(),
        DistanceMetric::CrossEntropy => -ps.iter().zip(&qs).map(|(a, b)| a * b.ln()).sum::<f64>(),
    };
    // Rounding can leave a tiny negative KL for identical inputs.
    Ok(d.max(0.0))
}

fn inverse_weight(d: f64, p: f64) -> f64 {
    1.0 / (1.0 + d.powf(p))
}

/// Weights `1 / (1 + D(post_test, post_cal_i)^p)`, normalized together with
/// a unit weight for the test point.
pub fn geometric_weights(
    post_test: &GroupDistribution,
    post_cal: &[GroupDistribution],
    cfg: &WeightConfig,
) -> Result<WeightVector> {
    cfg.validate()?;
    let raw = post_cal
        .iter()
        .map(|q| {
            distribution_distance(post_test, q, cfg.metric, cfg.epsilon)
                .map(|d| inverse_weight(d, cfg.exponent))
        })
        .collect::<Result<Vec<f64>>>()?;
    WeightVector::from_unnormalized(raw, 1.0)
}
