//! JSON run configuration. Every field has a default in code; the effective
//! configuration is echoed next to a run's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nlcnn_core::augment::{AugmentOp, AugmentSpec, Granularity, DEFAULT_EXP_HI, DEFAULT_EXP_LO, DEFAULT_PROBABILITY};
use nlcnn_core::constraints::{ConstraintPolicy, EnforceMode, ReparamKind, DEFAULT_V_MAX, DEFAULT_V_MIN};
use nlcnn_core::dataset::{SyntheticParams, DEFAULT_WIN_LEN, DEFAULT_WIN_STRIDE};
use nlcnn_core::training::{LayerSpec, Optimizer, TrainConfig};
use nlcnn_core::{Activation, VariantKind};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub constraints: ConstraintConfig,
    pub augment: Vec<AugmentEntry>,
    pub train: TrainSection,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Tep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding `dNN.dat` / `dNN_te.dat` files.
    pub path: Option<PathBuf>,
    /// Fault ids loaded next to the normal runs.
    pub faults: Vec<usize>,
    pub win_len: usize,
    pub stride: usize,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            path: None,
            faults: vec![1],
            win_len: DEFAULT_WIN_LEN,
            stride: DEFAULT_WIN_STRIDE,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub win_len: usize,
    pub channels: usize,
    pub exponent: f64,
    pub noise: f64,
    pub margin: f64,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let p = SyntheticParams::default();
        Self {
            win_len: p.win_len,
            channels: p.channels,
            exponent: p.exponent,
            noise: p.noise,
            margin: p.margin,
            train_count: p.count,
            test_count: p.count,
        }
    }
}

impl SyntheticConfig {
    pub fn params(&self, count: usize, seed: u64) -> SyntheticParams {
        SyntheticParams {
            win_len: self.win_len,
            channels: self.channels,
            exponent: self.exponent,
            noise: self.noise,
            count,
            margin: self.margin,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: vec![LayerConfig::default()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerConfig {
    pub variant: String,
    pub k_h: usize,
    pub k_w: usize,
    /// `[time, channel]`
    pub stride: [usize; 2],
    pub out_channels: usize,
    pub activation: String,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            variant: VariantKind::Elementwise.name().into(),
            k_h: 1,
            k_w: 1,
            stride: [1, 1],
            out_channels: 1,
            activation: Activation::Identity.name().into(),
        }
    }
}

impl LayerConfig {
    pub fn spec(&self) -> Result<LayerSpec, CliError> {
        Ok(LayerSpec {
            variant: self.variant.parse().map_err(CliError::config)?,
            k_h: self.k_h,
            k_w: self.k_w,
            stride_t: self.stride[0],
            stride_c: self.stride[1],
            out_channels: self.out_channels,
            activation: self.activation.parse().map_err(CliError::config)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    pub v_min: f64,
    pub v_max: f64,
    /// `clip`, `project` or `reparam`
    pub mode: String,
    /// Map used by `reparam`: `scaled_sigmoid`, `scaled_tanh` or
    /// `hard_sigmoid_clip`.
    pub kind: Option<String>,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            v_min: DEFAULT_V_MIN,
            v_max: DEFAULT_V_MAX,
            mode: "clip".into(),
            kind: None,
        }
    }
}

impl ConstraintConfig {
    pub fn policy(&self) -> Result<ConstraintPolicy, CliError> {
        let mode = match (self.mode.as_str(), &self.kind) {
            ("clip", None) => EnforceMode::ClipParams,
            ("project", None) => EnforceMode::ProjectAfterStep,
            ("reparam", Some(kind)) => EnforceMode::Reparam(kind.parse::<ReparamKind>().map_err(CliError::config)?),
            ("reparam", None) => {
                return Err(CliError::Config(
                    "constraints.kind is required for mode `reparam`".into(),
                ))
            }
            ("clip" | "project", Some(_)) => {
                return Err(CliError::Config(
                    "constraints.kind is only valid with mode `reparam`".into(),
                ))
            }
            (other, _) => return Err(CliError::Config(format!("unknown constraints.mode `{other}`"))),
        };
        ConstraintPolicy::new(self.v_min, self.v_max, mode).map_err(CliError::config)
    }
}

fn default_p() -> f64 {
    DEFAULT_PROBABILITY
}

fn default_lo() -> f64 {
    DEFAULT_EXP_LO
}

fn default_hi() -> f64 {
    DEFAULT_EXP_HI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityName {
    PerPoint,
    PerRow,
    PerChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentEntry {
    LeftRightFlip {
        #[serde(default = "default_p")]
        p: f64,
    },
    BlockwiseFlip {
        block_len: usize,
        #[serde(default = "default_p")]
        p: f64,
    },
    BidirectionalFlip {
        #[serde(default = "default_p")]
        p: f64,
    },
    Exponent {
        #[serde(default = "default_granularity")]
        granularity: GranularityName,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        #[serde(default = "default_p")]
        p: f64,
    },
}

fn default_granularity() -> GranularityName {
    GranularityName::PerRow
}

impl AugmentEntry {
    pub fn spec(&self) -> Result<AugmentSpec, CliError> {
        let (op, p) = match *self {
            AugmentEntry::LeftRightFlip { p } => (AugmentOp::LeftRightFlip, p),
            AugmentEntry::BlockwiseFlip { block_len, p } => (AugmentOp::BlockwiseFlip { block_len }, p),
            AugmentEntry::BidirectionalFlip { p } => (AugmentOp::BiDirectionalFlip, p),
            AugmentEntry::Exponent { granularity, lo, hi, p } => {
                let granularity = match granularity {
                    GranularityName::PerPoint => Granularity::PerPoint,
                    GranularityName::PerRow => Granularity::PerRow,
                    GranularityName::PerChannel => Granularity::PerChannel,
                };
                (AugmentOp::ExponentAugment { granularity, lo, hi }, p)
            }
        };
        AugmentSpec::new(op, p).map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerName,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        let Optimizer::Adam { beta1, beta2, eps } = Optimizer::adam() else {
            unreachable!("adam() builds Adam")
        };
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            optimizer: OptimizerName::Adam,
            beta1,
            beta2,
            adam_eps: eps,
            seed: d.seed,
            eval_every: d.eval_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("nlcnn-out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Checks every section without touching the file system.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.source == DataSource::Tep && self.data.path.is_none() {
            return Err(CliError::Config("data.path is required for source `tep`".into()));
        }
        if self.model.layers.is_empty() {
            return Err(CliError::Config("model.layers must not be empty".into()));
        }
        let policy = self.constraints.policy()?;
        for (i, layer) in self.model.layers.iter().enumerate() {
            let spec = layer
                .spec()
                .map_err(|e| CliError::Config(format!("model.layers[{i}]: {e}")))?;
            policy
                .validate_for(spec.variant)
                .map_err(|e| CliError::Config(format!("model.layers[{i}]: {e}")))?;
        }
        self.train_config()?.validate().map_err(CliError::config)?;
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        let optimizer = match t.optimizer {
            OptimizerName::Sgd => Optimizer::Sgd,
            OptimizerName::Adam => Optimizer::Adam {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.adam_eps,
            },
        };
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            optimizer,
            seed: t.seed,
            augment: self.augment.iter().map(AugmentEntry::spec).collect::<Result<_, _>>()?,
            eval_every: t.eval_every,
        })
    }

    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>, CliError> {
        self.model.layers.iter().map(LayerConfig::spec).collect()
    }
}
