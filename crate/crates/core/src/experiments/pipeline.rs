//! Shared plumbing: seeds, model preparation, inference and conformal runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Method};
use crate::conformal::{
    evaluate, mondrian_calibrate, split_calibrate, weighted_quantile, CalibrationResult, Metrics,
    Partitioner, SampleView, ScoreFunction,
};
use crate::data::{generate_glyphs, Dataset, Split};
use crate::diagnostics::{geometric_weights, WeightConfig};
use crate::error::{Error, Result};
use crate::group::CyclicGroup;
use crate::model::{
    argmax, load_json, train_canonicalizer, train_classifier, Canonicalizer, Classifier, Decode,
    GroupDistribution, TrainReport,
};

/// Named random streams inside one trial.
pub mod stream {
    pub const CAL_DATA: u64 = 1;
    pub const TEST_DATA: u64 = 2;
    pub const CAL_SHIFT: u64 = 3;
    pub const TEST_SHIFT: u64 = 4;
    pub const CAL_SCORES: u64 = 5;
    pub const TEST_SCORES: u64 = 6;
    pub const DECODE: u64 = 7;
    pub const SYNTHETIC: u64 = 8;
    pub const GROUP_MAP: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of an independent stream derived from a trial seed.
pub fn stream_seed(trial_seed: u64, stream: u64) -> u64 {
    splitmix64(trial_seed ^ splitmix64(stream))
}

pub fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.base_seed.wrapping_add(trial as u64)
}

/// Upright predictor-training glyphs.
pub fn predictor_training_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.data;
    generate_glyphs(d.seed, d.train_count, d.num_classes, d.side)
}

/// Upright canonicalizer-training glyphs, disjoint in seed from the above.
pub fn canon_training_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.data;
    Ok(generate_glyphs(
        stream_seed(d.seed, 101),
        d.canon_train_count,
        d.num_classes,
        d.side,
    )?
    .with_split(Split::CanonTrain))
}

/// Fresh calibration or test glyphs for a trial stream.
pub fn trial_data(
    cfg: &ExperimentConfig,
    seed: u64,
    count: usize,
    split: Split,
) -> Result<Dataset> {
    let d = &cfg.data;
    Ok(generate_glyphs(seed, count, d.num_classes, d.side)?.with_split(split))
}

pub fn prepare_predictor(cfg: &ExperimentConfig) -> Result<(Classifier, Option<TrainReport>)> {
    if let Some(path) = &cfg.predictor.model {
        let clf: Classifier = load_json(path)?;
        if clf.side() != cfg.data.side || clf.num_classes() != cfg.data.num_classes {
            return Err(Error::config(format!(
                "model {} expects side {} and {} classes",
                path.display(),
                clf.side(),
                clf.num_classes()
            )));
        }
        return Ok((clf, None));
    }
    let train = predictor_training_data(cfg)?;
    let (clf, report) = train_classifier(&train, cfg.predictor.architecture, &cfg.predictor.train)?;
    Ok((clf, Some(report)))
}

pub fn prepare_canonicalizer(
    cfg: &ExperimentConfig,
    group: CyclicGroup,
) -> Result<(Canonicalizer, Option<TrainReport>)> {
    for path in &cfg.canonicalizer.models {
        let cn: Canonicalizer = load_json(path)?;
        if cn.group() == group {
            if cn.side() != cfg.data.side {
                return Err(Error::config(format!(
                    "canonicalizer {} expects side {}",
                    path.display(),
                    cn.side()
                )));
            }
            return Ok((cn, None));
        }
    }
    let train = canon_training_data(cfg)?;
    let c = &cfg.canonicalizer;
    let (cn, report) = train_canonicalizer(&train, group, c.architecture, c.temperature, &c.train)?;
    Ok((cn, Some(report)))
}

/// Predictions on one dataset.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub labels: Vec<usize>,
    pub partition_field: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub posteriors: Option<Vec<GroupDistribution>>,
}

/// Classify every sample, optionally through a canonicalizer. With
/// `canonicalize` false the canonicalizer only supplies posteriors.
pub fn evaluate_dataset(
    clf: &Classifier,
    cn: Option<&Canonicalizer>,
    canonicalize: bool,
    decode: Decode,
    d: &Dataset,
) -> Result<Evaluated> {
    let per_sample: Vec<(Vec<f64>, Option<GroupDistribution>)> = d
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| match cn {
            None => Ok((clf.predict_proba(&s.image)?, None)),
            Some(cn) => {
                let mode = match decode {
                    Decode::Argmax => Decode::Argmax,
                    Decode::Sample(seed) => Decode::Sample(stream_seed(seed, i as u64)),
                };
                let c = cn.canonicalize(&s.image, mode)?;
                let image = if canonicalize { &c.image } else { &s.image };
                Ok((clf.predict_proba(image)?, Some(c.posterior)))
            }
        })
        .collect::<Result<_>>()?;
    let (probs, posts): (Vec<_>, Vec<_>) = per_sample.into_iter().unzip();
    Ok(Evaluated {
        labels: d.labels(),
        partition_field: d.iter().map(|s| s.partition).collect(),
        predictions: probs.iter().map(|p| argmax(p)).collect(),
        probs,
        posteriors: posts.into_iter().collect(),
    })
}

/// Conformal settings shared by the methods of one run.
#[derive(Debug, Clone)]
pub struct MethodSettings<'a> {
    pub score_fn: ScoreFunction,
    pub alpha: f64,
    pub partitioner: &'a Partitioner,
    pub weights: &'a WeightConfig,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub sets: Vec<Vec<usize>>,
    /// The marginal quantile; for wcp the median of per-test quantiles.
    pub quantile: f64,
    pub calibration: Option<CalibrationResult>,
    /// Mondrian cell of each test sample, when the method uses cells.
    pub test_partitions: Option<Vec<usize>>,
}

fn with_seed(sf: ScoreFunction, seed: u64) -> ScoreFunction {
    match sf {
        ScoreFunction::Aps {
            randomized: true, ..
        } => ScoreFunction::Aps {
            randomized: true,
            seed,
        },
        other => other,
    }
}

fn partitions_of(part: &Partitioner, ev: &Evaluated, with_labels: bool) -> Result<Vec<usize>> {
    (0..ev.labels.len())
        .map(|i| {
            part.assign(SampleView {
                label: with_labels.then(|| ev.labels[i]),
                partition: ev.partition_field[i],
                posterior: ev.posteriors.as_ref().map(|p| &p[i]),
            })
        })
        .collect()
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        let (a, b) = (xs[n / 2 - 1], xs[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

/// Calibrate on `cal` and build prediction sets for `test`.
pub fn run_method(
    method: Method,
    cal: &Evaluated,
    test: &Evaluated,
    s: &MethodSettings<'_>,
    trial_seed: u64,
) -> Result<MethodOutcome> {
    let mut cal_scorer =
        with_seed(s.score_fn, stream_seed(trial_seed, stream::CAL_SCORES)).scorer();
    let cal_scores = cal
        .probs
        .iter()
        .zip(&cal.labels)
        .map(|(p, &y)| cal_scorer.score(p, y))
        .collect::<Result<Vec<f64>>>()?;
    let mut test_scorer =
        with_seed(s.score_fn, stream_seed(trial_seed, stream::TEST_SCORES)).scorer();
    let test_scores = test
        .probs
        .iter()
        .map(|p| test_scorer.all_scores(p))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    match method {
        Method::Scp => {
            let r = split_calibrate(&cal_scores, s.alpha)?;
            Ok(MethodOutcome {
                sets: test_scores.iter().map(|t| r.predict_set(t, None)).collect(),
                quantile: r.quantile,
                calibration: Some(r),
                test_partitions: None,
            })
        }
        Method::Mcp => {
            let cal_parts = partitions_of(s.partitioner, cal, true)?;
            let label_cond = s.partitioner.label_conditional();
            let test_parts = if label_cond {
                // Sets use per-label thresholds; cells are reported by true label.
                test.labels.clone()
            } else {
                partitions_of(s.partitioner, test, false)?
            };
            let k = cal_parts
                .iter()
                .chain(&test_parts)
                .max()
                .map_or(1, |m| m + 1);
            let r = mondrian_calibrate(&cal_scores, &cal_parts, k, s.alpha, label_cond)?;
            let sets = test_scores
                .iter()
                .zip(&test_parts)
                .map(|(t, &p)| r.predict_set(t, Some(p)))
                .collect();
            Ok(MethodOutcome {
                sets,
                quantile: r.quantile,
                calibration: Some(r),
                test_partitions: Some(test_parts),
            })
        }
        Method::Wcp => {
            let (cal_post, test_post) = match (&cal.posteriors, &test.posteriors) {
                (Some(c), Some(t)) => (c, t),
                _ => return Err(Error::config("wcp needs canonicalizer posteriors")),
            };
            let quantiles = test_post
                .par_iter()
                .map(|p| {
                    let w = geometric_weights(p, cal_post, s.weights)?;
                    weighted_quantile(&cal_scores, &w, s.alpha)
                })
                .collect::<Result<Vec<f64>>>()?;
            let sets = test_scores
                .iter()
                .zip(&quantiles)
                .map(|(t, &q)| crate::conformal::threshold_set(t, |_| q))
                .collect();
            let mut qs = quantiles;
            Ok(MethodOutcome {
                sets,
                quantile: median(&mut qs),
                calibration: None,
                test_partitions: None,
            })
        }
    }
}

pub fn metrics(
    outcome: &MethodOutcome,
    test: &Evaluated,
    partitions: Option<&[usize]>,
) -> Result<Metrics> {
    evaluate(
        &outcome.sets,
        &test.labels,
        partitions,
        Some(&test.predictions),
    )
}

/// Deterministic per-trial RNG for synthetic draws.
pub fn trial_rng(trial_seed: u64, stream_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(trial_seed, stream_id))
}
