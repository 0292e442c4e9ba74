//! Row types shared between the commands that write CSV tables and the
//! `report` command that reads them back.

use serde::{Deserialize, Serialize};

use bubblebench_core::attack::AttackKind;

use crate::config::SplitChoice;

/// `attack_meta.json`: what the attack stage ran against, so the
/// channel stage can rebuild the identical dataset slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackMeta {
    /// Dataset directory as given to the attack command.
    pub dataset: String,
    /// Which split the attacked slice was taken from.
    pub split: SplitChoice,
    /// Suite name (`imperceptible`, `grid`, or `custom`).
    pub suite: String,
    /// Sigma-map multiplier used by suite construction.
    pub kappa: f64,
    pub seed: u64,
    /// Sweep rows run.
    pub rows: usize,
    /// Adversarial sets persisted to disk.
    pub saved_sets: usize,
}

/// One row of `channel_eval.csv`: an attacked set measured on both
/// sides of the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvalRow {
    /// Set directory name, e.g. `a00_linf`.
    pub set: String,
    pub kind: AttackKind,
    pub epsilon: Option<f64>,
    pub k: Option<usize>,
    pub kappa: Option<f64>,
    /// Adversarial examples evaluated.
    pub examples: usize,
    pub channel_clean_accuracy: f64,
    pub digital_robust_accuracy: f64,
    pub physical_robust_accuracy: f64,
    /// `physical - digital`: how much of the attack the channel undoes.
    pub gap: f64,
    /// Tonal correction applied before classification.
    pub correction: String,
}

/// One row of `fidelity.csv`: how much of the digital perturbation
/// survives the channel, averaged over a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub set: String,
    pub kind: AttackKind,
    pub epsilon: Option<f64>,
    pub k: Option<usize>,
    pub kappa: Option<f64>,
    pub examples: usize,
    pub rmse: f64,
    pub kl_divergence: f64,
    pub ssim: f64,
}

/// Human-readable budget for stdout tables: `eps=0.0627`, `k=20`, or
/// the joint forms.
pub fn budget_label(kind: AttackKind, epsilon: Option<f64>, k: Option<usize>, kappa: Option<f64>) -> String {
    let eps = |e: Option<f64>| e.map(|v| format!("eps={v:.4}")).unwrap_or_default();
    let kk = |k: Option<usize>| k.map(|v| format!("k={v}")).unwrap_or_default();
    match kind {
        AttackKind::Linf | AttackKind::L2 | AttackKind::L1 => eps(epsilon),
        AttackKind::L0 => kk(k),
        AttackKind::L0Linf => format!("{} {}", kk(k), eps(epsilon)),
        AttackKind::L0Sigma => format!(
            "{} kappa={}",
            kk(k),
            kappa.map(|v| format!("{v}")).unwrap_or_default()
        ),
    }
}

/// Scalar that orders rows of one kind by budget: epsilon for the
/// dense-norm kinds and the joint l-inf sweep, k for the sparse kinds.
pub fn budget_scalar(kind: AttackKind, epsilon: Option<f64>, k: Option<usize>) -> f64 {
    match kind {
        AttackKind::Linf | AttackKind::L2 | AttackKind::L1 | AttackKind::L0Linf => {
            epsilon.unwrap_or(0.0)
        }
        AttackKind::L0 | AttackKind::L0Sigma => k.unwrap_or(0) as f64,
    }
}

/// Position of a kind in canonical reporting order.
pub fn kind_order(kind: AttackKind) -> usize {
    AttackKind::ALL
        .iter()
        .position(|&k| k == kind)
        .expect("every kind is in ALL")
}
