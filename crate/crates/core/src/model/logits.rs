//! `CP2L` logits container for externally produced (black-box) predictions.
//!
//! ```text
//! "CP2L"  u16 version=1  u32 count  u32 K
//! per sample: K × f32 logits
//! ```

use std::path::Path;

use super::classifier::Classifier;
use super::softmax;
use crate::codec::{read_file, write_file, Reader};
use crate::data::Dataset;
use crate::error::{Error, Result};

pub const LOGITS_MAGIC: &[u8; 4] = b"CP2L";
pub const LOGITS_VERSION: u16 = 1;

/// Classifier backed by a fixed table of logits, addressed by sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenClassifier {
    num_classes: usize,
    logits: Vec<Vec<f32>>,
}

impl FrozenClassifier {
    pub fn new(num_classes: usize, logits: Vec<Vec<f32>>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        if let Some(i) = logits.iter().position(|row| row.len() != num_classes) {
            return Err(Error::invalid(format!(
                "row {i} does not have {num_classes} logits"
            )));
        }
        Ok(Self {
            num_classes,
            logits,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self, index: usize) -> Result<&[f32]> {
        self.logits.get(index).map(Vec::as_slice).ok_or_else(|| {
            Error::Lookup(format!(
                "sample index {index} out of range for {} stored rows",
                self.logits.len()
            ))
        })
    }

    pub fn predict_proba(&self, index: usize) -> Result<Vec<f64>> {
        let row: Vec<f64> = self.logits(index)?.iter().map(|&z| z as f64).collect();
        Ok(softmax(&row))
    }
}

pub fn encode_logits(table: &FrozenClassifier) -> Result<Vec<u8>> {
    let count = u32::try_from(table.len()).map_err(|_| Error::invalid("too many rows"))?;
    let k = u32::try_from(table.num_classes).map_err(|_| Error::invalid("too many classes"))?;
    let mut out = Vec::with_capacity(14 + 4 * table.len() * table.num_classes);
    out.extend_from_slice(LOGITS_MAGIC);
    out.extend_from_slice(&LOGITS_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    for row in &table.logits {
        for z in row {
            out.extend_from_slice(&z.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_logits(bytes: &[u8], path: &Path) -> Result<FrozenClassifier> {
    let mut r = Reader::new(bytes, path);
    r.magic(LOGITS_MAGIC)?;
    let version = r.u16("format version")?;
    if version != LOGITS_VERSION {
        return Err(r.error(format!("unsupported logits version {version}")));
    }
    let count = r.u32("sample count")? as usize;
    let k = r.u32("class count")? as usize;
    if k < 2 {
        return Err(r.error(format!("class count {k} is below 2")));
    }
    let mut logits = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut row = Vec::with_capacity(k);
        for _ in 0..k {
            let z = r.f32("logit")?;
            if z.is_nan() {
                return Err(r.error("NaN logit"));
            }
            row.push(z);
        }
        logits.push(row);
    }
    r.finish()?;
    FrozenClassifier::new(k, logits)
}

/// Logits of `clf` on every sample of `d`, in dataset order.
pub fn logits_table(clf: &Classifier, d: &Dataset) -> Result<FrozenClassifier> {
    let rows = d
        .iter()
        .map(|s| {
            Ok(clf
                .logits(&s.image)?
                .into_iter()
                .map(|z| z as f32)
                .collect())
        })
        .collect::<Result<Vec<Vec<f32>>>>()?;
    FrozenClassifier::new(clf.num_classes(), rows)
}

pub fn export_logits(clf: &Classifier, d: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &encode_logits(&logits_table(clf, d)?)?)
}

pub fn ingest_logits(path: &Path) -> Result<FrozenClassifier> {
    decode_logits(&read_file(path)?, path)
}
