//! The experiment configuration document.
//!
//! One JSON file can drive every pipeline stage; each subcommand reads
//! only its own section. All sections are optional — commands fall back
//! to documented defaults — but unknown fields anywhere are rejected,
//! so typos fail loudly before anything runs.
//!
//! Seed precedence everywhere: the `--seed` flag, then the section's
//! `seed`, then the top-level `seed`, then whatever the inner object
//! carries (default 0).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bubblebench_core::attack::{AttackConfig, Direction};
use bubblebench_core::channel::ChannelConfig;
use bubblebench_core::classifier::{LossKind, ModelKind, TrainConfig};
use bubblebench_core::synth::DatasetSpec;
use bubblebench_core::{Error, Result};

/// Top-level configuration: a global seed and output root plus one
/// section per pipeline stage.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Default seed for every stage (section seeds take precedence).
    pub seed: Option<u64>,
    /// Root directory; stages without `--out` write to
    /// `<out_dir>/<stage>`.
    pub out_dir: Option<PathBuf>,
    pub election: Option<ElectionSection>,
    pub dataset: Option<DatasetSection>,
    pub train: Option<TrainSection>,
    pub attack: Option<AttackSection>,
    pub channel: Option<ChannelSection>,
}

/// Defaults for `pc-solve` and `validate`; command-line flags override
/// field by field.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectionSection {
    pub p_b: Option<f64>,
    pub delta: Option<f64>,
    pub n: Option<u64>,
    pub alpha: Option<f64>,
    /// Monte Carlo trials for `validate`.
    pub trials: Option<u64>,
    /// Forced compromise fraction for `validate` (skips the solver).
    pub pc: Option<f64>,
    pub seed: Option<u64>,
}

/// What `gen-data` should synthesize: a named preset or a full spec.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// One of `bubbles_small`, `combined_small`. Mutually exclusive
    /// with `spec`; when both are absent, `combined_small` is used.
    pub preset: Option<String>,
    /// Full dataset specification.
    pub spec: Option<DatasetSpec>,
    pub seed: Option<u64>,
}

/// Inputs and hyperparameters for `train`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Dataset directory produced by `gen-data`.
    pub dataset: Option<PathBuf>,
    /// Classifier shape; default `linear`.
    pub model: Option<ModelKind>,
    /// Hyperparameters; omitted fields take library defaults.
    pub config: Option<TrainConfig>,
    pub seed: Option<u64>,
}

/// Which rows of a dataset a stage should consume.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    Train,
    #[default]
    Val,
    All,
}

impl SplitChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::All => "all",
        }
    }
}

/// Inputs and attack selection for `attack`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// Trained model file produced by `train`.
    pub model: Option<PathBuf>,
    /// Dataset directory produced by `gen-data`.
    pub dataset: Option<PathBuf>,
    /// Which split to attack; default `val`.
    pub split: Option<SplitChoice>,
    /// `imperceptible` (six calibrated budgets, default) or `grid`
    /// (every kind over its full budget grid). Mutually exclusive with
    /// `configs`.
    pub suite: Option<String>,
    /// Explicit attack configurations instead of a suite.
    pub configs: Option<Vec<AttackConfig>>,
    /// Local-deviation multiplier for the sigma-bounded kind in suites.
    pub kappa: Option<f64>,
    /// Override the per-config step budget for suite rows.
    pub steps: Option<usize>,
    /// Override the restart count for suite rows.
    pub restarts: Option<usize>,
    /// Override the loss for suite rows.
    pub loss: Option<LossKind>,
    /// Override the flip direction for suite rows.
    pub direction: Option<Direction>,
    /// Persist adversarial images per row; defaults to true for the
    /// imperceptible suite and false otherwise.
    pub save_adv: Option<bool>,
    pub seed: Option<u64>,
}

/// Inputs and channel selection for `channel`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Trained model file produced by `train`.
    pub model: Option<PathBuf>,
    /// Dataset directory produced by `gen-data`.
    pub dataset: Option<PathBuf>,
    /// Attack output directory holding the saved adversarial sets.
    pub adv: Option<PathBuf>,
    /// Channel preset name; mutually exclusive with `config`. When
    /// both are absent, `laser+scan` is used.
    pub preset: Option<String>,
    /// Full channel configuration.
    pub config: Option<ChannelConfig>,
    pub seed: Option<u64>,
}

/// Parse a configuration document from raw bytes.
pub fn parse_config(bytes: &[u8]) -> Result<ExperimentConfig> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::malformed("config", format!("not utf-8: {e}")))?;
    serde_json::from_str(text).map_err(|e| Error::malformed("config", e.to_string()))
}

/// Load a configuration document from disk.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&bytes)
        .map_err(|e| Error::malformed("config", format!("{}: {e}", path.display())))
}

/// Resolve the effective seed under the documented precedence.
pub fn resolve_seed(
    flag: Option<u64>,
    section: Option<u64>,
    global: Option<u64>,
    inner: u64,
) -> u64 {
    flag.or(section).or(global).unwrap_or(inner)
}
