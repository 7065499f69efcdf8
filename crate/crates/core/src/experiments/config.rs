use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::read_file;
use crate::conformal::{Partitioner, ScoreFunction};
use crate::data::{ShiftSpec, KAPPA_SCHEDULE};
use crate::diagnostics::{Assignment, WeightConfig};
use crate::error::{Error, Result};
use crate::group::CyclicGroup;
use crate::model::{Architecture, Decode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Robustness,
    GroupMap,
    DoubleShift,
    CoverageSanity,
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Robustness => "robustness",
            Study::GroupMap => "group-map",
            Study::DoubleShift => "double-shift",
            Study::CoverageSanity => "coverage-sanity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Scp,
    Mcp,
    Wcp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Scp => "scp",
            Method::Mcp => "mcp",
            Method::Wcp => "wcp",
        })
    }
}

/// Synthetic glyph data used by every image study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub num_classes: usize,
    pub side: usize,
    pub train_count: usize,
    pub canon_train_count: usize,
    pub cal_count: usize,
    pub test_count: usize,
    /// Seed of the training sets; trial data is seeded per trial.
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            side: 16,
            train_count: 2000,
            canon_train_count: 2000,
            cal_count: 500,
            test_count: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
    /// Load this model instead of training one.
    pub model: Option<PathBuf>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mlp1Hidden { width: 64 },
            train: TrainConfig::default(),
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CanonicalizerConfig {
    pub architecture: Architecture,
    pub temperature: f64,
    pub train: TrainConfig,
    /// Pretrained canonicalizers; a group without one here is trained.
    pub models: Vec<PathBuf>,
    /// Pose decoding at prediction time.
    pub decode: Decode,
}

impl Default for CanonicalizerConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mlp1Hidden { width: 64 },
            temperature: 1.0,
            train: TrainConfig::default(),
            models: Vec::new(),
            decode: Decode::Argmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    /// One canonicalizer variant per group, next to the base predictor.
    pub cn_groups: Vec<CyclicGroup>,
    /// Uniform shifts over these groups; order 1 means no shift.
    pub shift_groups: Vec<CyclicGroup>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            cn_groups: vec![CyclicGroup::C4, CyclicGroup::C8],
            shift_groups: vec![
                CyclicGroup::new(1).expect("order 1 is valid"),
                CyclicGroup::C4,
                CyclicGroup::C8,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupMapConfig {
    /// Mondrian cells for the mcp method.
    pub partitioner: Partitioner,
    pub assignment: Assignment,
    pub conf_threshold: f64,
    /// Classify canonicalized inputs instead of raw ones.
    pub canonicalize: bool,
}

impl Default for GroupMapConfig {
    fn default() -> Self {
        Self {
            partitioner: Partitioner::ByGroupArgmax,
            assignment: Assignment::default(),
            conf_threshold: 0.0,
            canonicalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleShiftConfig {
    pub kappas: Vec<f64>,
    /// Group on which test poses are drawn.
    pub test_group: CyclicGroup,
}

impl Default for DoubleShiftConfig {
    fn default() -> Self {
        Self {
            kappas: KAPPA_SCHEDULE.to_vec(),
            test_group: CyclicGroup::C360,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SanityConfig {
    pub cal_count: usize,
    pub test_count: usize,
}

impl Default for SanityConfig {
    fn default() -> Self {
        Self {
            cal_count: 500,
            test_count: 500,
        }
    }
}

/// One experiment run, read from a JSON file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    #[serde(default)]
    pub data: DataConfig,
    /// Canonicalizer group for the group-map and double-shift studies.
    #[serde(default = "default_group")]
    pub group: CyclicGroup,
    #[serde(default = "default_shift")]
    pub calibration_shift: ShiftSpec,
    #[serde(default = "default_shift")]
    pub test_shift: ShiftSpec,
    #[serde(default)]
    pub score_fn: ScoreFunction,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub canonicalizer: CanonicalizerConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub group_map: GroupMapConfig,
    #[serde(default)]
    pub double_shift: DoubleShiftConfig,
    #[serde(default)]
    pub sanity: SanityConfig,
}

fn default_group() -> CyclicGroup {
    CyclicGroup::C8
}

fn default_shift() -> ShiftSpec {
    ShiftSpec::None
}

fn default_alpha() -> f64 {
    0.1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Scp]
}

fn default_trials() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Defaults for `study`, with everything else at its documented default.
    pub fn new(study: Study) -> Self {
        Self {
            study,
            data: DataConfig::default(),
            group: default_group(),
            calibration_shift: default_shift(),
            test_shift: default_shift(),
            score_fn: ScoreFunction::default(),
            alpha: default_alpha(),
            methods: default_methods(),
            weights: WeightConfig::default(),
            trials: default_trials(),
            base_seed: 0,
            output_dir: default_output(),
            predictor: PredictorConfig::default(),
            canonicalizer: CanonicalizerConfig::default(),
            robustness: RobustnessConfig::default(),
            group_map: GroupMapConfig::default(),
            double_shift: DoubleShiftConfig::default(),
            sanity: SanityConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::config(format!("{} is not UTF-8", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods must not be empty"));
        }
        let d = &self.data;
        if d.train_count == 0 || d.canon_train_count == 0 || d.cal_count == 0 || d.test_count == 0 {
            return Err(Error::config("dataset counts must be positive"));
        }
        if !(2..=crate::data::MAX_CLASSES).contains(&d.num_classes) || d.side < 16 {
            return Err(Error::config(format!(
                "need 2..={} classes and side >= 16",
                crate::data::MAX_CLASSES
            )));
        }
        self.predictor.train.validate()?;
        self.canonicalizer.train.validate()?;
        self.weights.validate()?;
        if !(self.canonicalizer.temperature > 0.0) {
            return Err(Error::config("canonicalizer temperature must be positive"));
        }
        for path in self
            .predictor
            .model
            .iter()
            .chain(&self.canonicalizer.models)
        {
            if !path.is_file() {
                return Err(Error::config(format!(
                    "referenced model {} does not exist",
                    path.display()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.group_map.conf_threshold) {
            return Err(Error::config("conf_threshold must lie in [0, 1]"));
        }
        if self
            .double_shift
            .kappas
            .iter()
            .any(|k| !(*k >= 0.0 && k.is_finite()))
        {
            return Err(Error::config("kappas must be finite and non-negative"));
        }
        if self.study == Study::DoubleShift
            && !self
                .double_shift
                .test_group
                .order()
                .is_multiple_of(self.group.order())
        {
            return Err(Error::config(format!(
                "test group {} must contain the calibration group {}",
                self.double_shift.test_group, self.group
            )));
        }
        if self.sanity.cal_count == 0 || self.sanity.test_count == 0 {
            return Err(Error::config("sanity counts must be positive"));
        }
        for spec in [&self.calibration_shift, &self.test_shift] {
            spec.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        Ok(())
    }
}
