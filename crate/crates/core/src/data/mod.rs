//! Labeled image datasets, synthetic glyph generation, geometric shifts and
//! the binary dataset container.

mod glyphs;
mod io;
mod shift;
mod von_mises;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::image::GridImage;

pub use glyphs::{generate_glyphs, GlyphParams, MAX_CLASSES};
pub use io::{
    decode_dataset, encode_dataset, read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION,
    NO_POSE,
};
pub use shift::{apply_shift, wrapped_normal_pmf, NormalParams, ShiftSpec, VAR_GAUSS_SIGMAS};
pub use von_mises::{
    bessel_i0, group_angles, mixture_grid_probs, sample_von_mises_mixture, von_mises_pdf,
    KAPPA_SCHEDULE,
};

/// One image with its class label, partition id and (diagnostic-only)
/// ground-truth pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub image: GridImage,
    pub label: usize,
    pub partition: usize,
    pub true_pose: Option<GroupElement>,
}

impl LabeledSample {
    pub fn new(image: GridImage, label: usize) -> Self {
        Self {
            image,
            label,
            partition: label,
            true_pose: None,
        }
    }
}

/// Role a dataset plays in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    CanonTrain,
    PredictorTrain,
    Calibration,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::CanonTrain => "canon-train",
            Split::PredictorTrain => "predictor-train",
            Split::Calibration => "calibration",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canon-train" => Ok(Split::CanonTrain),
            "predictor-train" => Ok(Split::PredictorTrain),
            "calibration" => Ok(Split::Calibration),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split tag {other:?}"))),
        }
    }
}

/// A nonempty collection of samples sharing one image side and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    split: Split,
    num_classes: usize,
    side: usize,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(split: Split, num_classes: usize, samples: Vec<LabeledSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("dataset must contain at least one sample"))?;
        let side = first.image.side();
        for (i, s) in samples.iter().enumerate() {
            if s.image.side() != side {
                return Err(Error::invalid(format!(
                    "sample {i} has side {} but dataset side is {side}",
                    s.image.side()
                )));
            }
            if s.label >= num_classes {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} >= class count {num_classes}",
                    s.label
                )));
            }
        }
        Ok(Self {
            split,
            num_classes,
            side,
            samples,
        })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// One more than the largest partition id present.
    pub fn num_partitions(&self) -> usize {
        self.samples.iter().map(|s| s.partition).max().unwrap_or(0) + 1
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSample> {
        self.samples.iter()
    }

    pub fn images(&self) -> impl Iterator<Item = &GridImage> {
        self.samples.iter().map(|s| &s.image)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Replace every partition id using `f(sample)`.
    pub fn repartition(mut self, f: impl Fn(&LabeledSample) -> usize) -> Self {
        for s in &mut self.samples {
            s.partition = f(s);
        }
        self
    }

    /// A new dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("subset index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(split, self.num_classes, samples)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a LabeledSample;
    type IntoIter = std::slice::Iter<'a, LabeledSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_empty_and_mismatches() {
        assert!(Dataset::new(Split::Test, 2, vec![]).is_err());
        let a = LabeledSample::new(GridImage::zeros(4), 0);
        let b = LabeledSample::new(GridImage::zeros(5), 1);
        assert!(Dataset::new(Split::Test, 2, vec![a.clone(), b]).is_err());
        let c = LabeledSample::new(GridImage::zeros(4), 2);
        assert!(Dataset::new(Split::Test, 2, vec![a, c]).is_err());
    }

    #[test]
    fn split_tags_roundtrip() {
        for s in [
            Split::CanonTrain,
            Split::PredictorTrain,
            Split::Calibration,
            Split::Test,
        ] {
            assert_eq!(s.to_string().parse::<Split>().unwrap(), s);
        }
        assert!("train".parse::<Split>().is_err());
    }

    #[test]
    fn subset_and_partitions() {
        let samples = (0..4)
            .map(|i| LabeledSample::new(GridImage::zeros(2), i % 2))
            .collect();
        let d = Dataset::new(Split::Calibration, 2, samples).unwrap();
        assert_eq!(d.num_partitions(), 2);
        let sub = d.subset(&[3, 0], Split::Test).unwrap();
        assert_eq!(sub.labels(), vec![1, 0]);
        assert!(d.subset(&[9], Split::Test).is_err());
        let re = d.repartition(|s| s.label + 5);
        assert_eq!(re.num_partitions(), 7);
    }
}
