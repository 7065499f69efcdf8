//! Predictors and the orbit-softmax canonicalizer.

mod canonicalizer;
mod classifier;
mod logits;
mod network;
mod train;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::codec::{read_file, write_file};
use crate::error::{Error, Result};

pub use canonicalizer::{
    train_canonicalizer, Canonicalized, Canonicalizer, Decode, GroupDistribution,
};
pub use classifier::{train_classifier, Classifier};
pub use logits::{
    decode_logits, encode_logits, export_logits, ingest_logits, logits_table, FrozenClassifier,
    LOGITS_MAGIC, LOGITS_VERSION,
};
pub use network::{Activations, Architecture, Network};
pub use train::{Optimizer, TrainConfig, TrainReport, MOMENTUM};

/// Logits are clamped to this magnitude before normalisation.
pub const LOGIT_CLAMP: f64 = 1e6;

fn clamp_logit(z: f64) -> f64 {
    if z.is_nan() {
        -LOGIT_CLAMP
    } else {
        z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }
}

/// Training treats outputs at or beyond the clamp as divergence.
fn diverged(outputs: &[f64]) -> bool {
    outputs.iter().any(|z| !(z.abs() < LOGIT_CLAMP))
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = logits.iter().map(|&v| clamp_logit(v)).collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = log_softmax(logits).into_iter().map(f64::exp).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::invalid(format!("cannot serialise model: {e}")))?;
    write_file(path, &text)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        let offset = bytes
            .split(|&b| b == b'\n')
            .take(e.line().saturating_sub(1))
            .map(|l| l.len() as u64 + 1)
            .sum::<u64>()
            + e.column().saturating_sub(1) as u64;
        Error::Parse {
            path: path.to_path_buf(),
            offset,
            reason: e.to_string(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_normalised_and_clamped() {
        let p = softmax(&[f64::INFINITY, 0.0, f64::NEG_INFINITY]);
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
        assert_eq!(softmax(&[2.0, 2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn json_roundtrip_and_parse_offset() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::init(Architecture::SoftmaxLinear, 4, 2, 1).unwrap();
        let clf = Classifier::new(net, 2).unwrap();
        let path = dir.path().join("m.json");
        save_json(&clf, &path).unwrap();
        let back: Classifier = load_json(&path).unwrap();
        assert_eq!(back, clf);
        std::fs::write(&path, b"{\n  \"network\": ]").unwrap();
        match load_json::<Classifier>(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 15),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
