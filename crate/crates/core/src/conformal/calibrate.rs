use serde::{Deserialize, Serialize};

use super::quantile::{conformal_quantile, weighted_quantile, WeightVector};
use super::score::threshold_set;
use crate::error::{Error, Result};
use crate::model::GroupDistribution;

/// Outcome of split, Mondrian or weighted calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub n: usize,
    /// Marginal quantile; for Mondrian runs this is the pooled split quantile.
    pub quantile: f64,
    pub partition_quantiles: Option<Vec<f64>>,
    /// Partition counts, aligned with `partition_quantiles`.
    pub partition_counts: Option<Vec<usize>>,
    /// Partitions are candidate labels rather than a property of the input.
    pub label_conditional: bool,
    pub weights: Option<WeightVector>,
}

impl CalibrationResult {
    /// Threshold applied to label `y` of a sample in `partition`.
    pub fn threshold(&self, partition: Option<usize>, y: usize) -> f64 {
        match &self.partition_quantiles {
            None => self.quantile,
            Some(qs) => {
                let k = if self.label_conditional {
                    Some(y)
                } else {
                    partition
                };
                // Unseen partitions have no calibration data.
                k.and_then(|k| qs.get(k).copied()).unwrap_or(f64::INFINITY)
            }
        }
    }

    /// Prediction set from the scores of every label of one sample.
    pub fn predict_set(&self, scores: &[f64], partition: Option<usize>) -> Vec<usize> {
        threshold_set(scores, |y| self.threshold(partition, y))
    }
}

pub fn split_calibrate(scores: &[f64], alpha: f64) -> Result<CalibrationResult> {
    Ok(CalibrationResult {
        alpha,
        n: scores.len(),
        quantile: conformal_quantile(scores, alpha)?,
        partition_quantiles: None,
        partition_counts: None,
        label_conditional: false,
        weights: None,
    })
}

/// Split calibration run independently inside each partition `0..num_partitions`.
/// Empty partitions get `+∞`.
pub fn mondrian_calibrate(
    scores: &[f64],
    partitions: &[usize],
    num_partitions: usize,
    alpha: f64,
    label_conditional: bool,
) -> Result<CalibrationResult> {
    if scores.len() != partitions.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} partition ids",
            scores.len(),
            partitions.len()
        )));
    }
    let mut cells = vec![Vec::new(); num_partitions];
    for (&s, &k) in scores.iter().zip(partitions) {
        cells
            .get_mut(k)
            .ok_or_else(|| {
                Error::invalid(format!("partition {k} out of range 0..{num_partitions}"))
            })?
            .push(s);
    }
    let quantiles = cells
        .iter()
        .map(|c| {
            if c.is_empty() {
                Ok(f64::INFINITY)
            } else {
                conformal_quantile(c, alpha)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationResult {
        alpha,
        n: scores.len(),
        quantile: conformal_quantile(scores, alpha)?,
        partition_quantiles: Some(quantiles),
        partition_counts: Some(cells.iter().map(Vec::len).collect()),
        label_conditional,
        weights: None,
    })
}

pub fn weighted_calibrate(
    scores: &[f64],
    weights: WeightVector,
    alpha: f64,
) -> Result<CalibrationResult> {
    Ok(CalibrationResult {
        alpha,
        n: scores.len(),
        quantile: weighted_quantile(scores, &weights, alpha)?,
        partition_quantiles: None,
        partition_counts: None,
        label_conditional: false,
        weights: Some(weights),
    })
}

/// What a partitioner may look at for one sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    /// Known for calibration samples only.
    pub label: Option<usize>,
    pub partition: usize,
    pub posterior: Option<&'a GroupDistribution>,
}

/// Maps samples to Mondrian cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Partitioner {
    ByLabel,
    /// The dataset's stored partition id.
    ByPartitionField,
    /// Argmax of the canonicalizer's group posterior.
    ByGroupArgmax,
    /// Posterior entropy binned by ascending `edges`.
    ByEntropyBins {
        edges: Vec<f64>,
    },
}

impl Partitioner {
    pub fn label_conditional(&self) -> bool {
        matches!(self, Partitioner::ByLabel)
    }

    pub fn assign(&self, view: SampleView<'_>) -> Result<usize> {
        let posterior = || {
            view.posterior
                .ok_or_else(|| Error::invalid("partitioner needs a group posterior"))
        };
        match self {
            Partitioner::ByLabel => view
                .label
                .ok_or_else(|| Error::invalid("label partitioning needs a label")),
            Partitioner::ByPartitionField => Ok(view.partition),
            Partitioner::ByGroupArgmax => Ok(posterior()?.argmax().index() as usize),
            Partitioner::ByEntropyBins { edges } => {
                let h = posterior()?.entropy();
                Ok(edges.iter().filter(|&&e| e <= h).count())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub partition: usize,
    pub n: usize,
    pub coverage: f64,
    pub mean_set_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub coverage: f64,
    pub mean_set_size: f64,
    pub empty_sets: usize,
    pub accuracy: Option<f64>,
    /// Present partitions only, ascending.
    pub per_partition: Option<Vec<PartitionMetrics>>,
}

pub fn evaluate(
    sets: &[Vec<usize>],
    truths: &[usize],
    partitions: Option<&[usize]>,
    predictions: Option<&[usize]>,
) -> Result<Metrics> {
    let n = sets.len();
    let mismatch =
        |what: &str, len: usize| Error::invalid(format!("{len} {what} for {n} prediction sets"));
    if truths.len() != n {
        return Err(mismatch("labels", truths.len()));
    }
    if n == 0 {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let covered: Vec<bool> = sets
        .iter()
        .zip(truths)
        .map(|(s, y)| s.contains(y))
        .collect();
    let frac = |xs: &mut dyn Iterator<Item = f64>| {
        let (sum, count) = xs.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        sum / count as f64
    };
    let per_partition = match partitions {
        None => None,
        Some(p) if p.len() != n => return Err(mismatch("partition ids", p.len())),
        Some(p) => {
            let k = p.iter().max().map_or(0, |m| m + 1);
            let mut rows = Vec::new();
            for part in 0..k {
                let idx: Vec<usize> = (0..n).filter(|&i| p[i] == part).collect();
                if idx.is_empty() {
                    continue;
                }
                rows.push(PartitionMetrics {
                    partition: part,
                    n: idx.len(),
                    coverage: frac(&mut idx.iter().map(|&i| f64::from(u8::from(covered[i])))),
                    mean_set_size: frac(&mut idx.iter().map(|&i| sets[i].len() as f64)),
                });
            }
            Some(rows)
        }
    };
    let accuracy = match predictions {
        None => None,
        Some(p) if p.len() != n => return Err(mismatch("point predictions", p.len())),
        Some(p) => Some(frac(
            &mut p
                .iter()
                .zip(truths)
                .map(|(a, b)| f64::from(u8::from(a == b))),
        )),
    };
    Ok(Metrics {
        n,
        coverage: frac(&mut covered.iter().map(|&c| f64::from(u8::from(c)))),
        mean_set_size: frac(&mut sets.iter().map(|s| s.len() as f64)),
        empty_sets: sets.iter().filter(|s| s.is_empty()).count(),
        accuracy,
        per_partition,
    })
}
