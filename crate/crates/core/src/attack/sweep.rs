//! Budget sweeps with carry-forward.
//!
//! A sweep attacks the same dataset under a list of configurations and
//! tabulates robust accuracy per row. Within a group of rows that share
//! everything except the budget scalar (same kind, loss, direction, and
//! fixed secondary parameter), budgets are processed in ascending order
//! and successes carry forward: a perturbation feasible at a smaller
//! budget is feasible at every larger one, so the example stays flipped
//! and is not re-attacked. Output rows keep the caller's order.

use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{LossKind, Model};
use crate::error::Error;
use crate::image::{BubbleImage, Label};
use crate::Result;

use super::{attack_indices, eligible_indices, AdvExample, AttackConfig, AttackKind, Direction};

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: AttackKind,
    pub epsilon: Option<f64>,
    pub k: Option<usize>,
    pub kappa: Option<f64>,
    pub loss: LossKind,
    pub direction: Direction,
    /// Correctly classified examples admitted by the direction.
    pub eligible: usize,
    /// Examples actually attacked at this budget.
    pub attacked: usize,
    /// Successes inherited from smaller budgets in the same group.
    pub carried_in: usize,
    /// Total flipped examples at this budget (carried plus new).
    pub successes: usize,
    pub success_over: usize,
    pub success_under: usize,
    pub robust_accuracy: f64,
    /// Mean gradient steps over the examples attacked at this budget
    /// (0 when everything carried forward).
    pub mean_steps: f64,
}

/// A group shares carried successes; the budget scalar varies inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct GroupKey {
    kind: AttackKind,
    loss: LossKind,
    direction: Direction,
    /// Bits of the secondary parameter that stays fixed while the
    /// budget grows: k for the joint l0 + l-inf kind, kappa for the
    /// sigma kind, unused otherwise.
    secondary: u64,
}

impl GroupKey {
    fn of(cfg: &AttackConfig) -> GroupKey {
        let secondary = match cfg.kind {
            AttackKind::L0Linf => cfg.k.unwrap_or(0) as u64,
            AttackKind::L0Sigma => cfg.kappa.unwrap_or(0.0).to_bits(),
            _ => 0,
        };
        GroupKey {
            kind: cfg.kind,
            loss: cfg.loss,
            direction: cfg.direction,
            secondary,
        }
    }
}

/// A sweep table together with the adversarial examples behind it.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// One row per input configuration, in input order.
    pub rows: Vec<SweepRow>,
    /// The examples freshly attacked for each row, keyed by dataset
    /// index. Examples whose flip carried forward from a smaller budget
    /// in the same group are not re-attacked and do not reappear here,
    /// so only a group's smallest budget is guaranteed a complete set.
    pub examples: Vec<Vec<(usize, AdvExample)>>,
}

/// Run every configuration against the dataset and tabulate one row per
/// configuration, in input order.
pub fn attack_sweep(
    model: &Model,
    data: &[BubbleImage],
    configs: &[AttackConfig],
) -> Result<Vec<SweepRow>> {
    attack_sweep_detailed(model, data, configs).map(|outcome| outcome.rows)
}

/// [`attack_sweep`], but keeping the per-row adversarial examples so
/// callers can persist the attacked images.
pub fn attack_sweep_detailed(
    model: &Model,
    data: &[BubbleImage],
    configs: &[AttackConfig],
) -> Result<SweepOutcome> {
    // Validate everything up front so a bad row fails before hours of
    // attacks, and establish the ascending-budget processing order.
    let mut order: Vec<(GroupKey, f64, usize)> = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        let constraint = cfg.validate()?;
        order.push((GroupKey::of(cfg), constraint.budget(), i));
    }
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut rows: Vec<Option<SweepRow>> = vec![None; configs.len()];
    let mut examples: Vec<Vec<(usize, AdvExample)>> = vec![Vec::new(); configs.len()];
    let mut current_group: Option<GroupKey> = None;
    let mut carried: BTreeSet<usize> = BTreeSet::new();

    for (group, _, index) in order {
        if current_group != Some(group) {
            current_group = Some(group);
            carried.clear();
        }
        let cfg = &configs[index];
        let eligible = eligible_indices(model, data, cfg.direction);
        if eligible.is_empty() {
            return Err(Error::invalid(format!(
                "no eligible examples for direction `{}`",
                cfg.direction.as_str()
            )));
        }
        let carried_in = carried.len();
        let to_attack: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|i| !carried.contains(i))
            .collect();
        let results = attack_indices(model, data, cfg, &to_attack)?;
        let mut steps_total = 0usize;
        for (i, adv) in &results {
            steps_total += adv.steps_used;
            if adv.success {
                carried.insert(*i);
            }
        }
        let success_over = carried
            .iter()
            .filter(|&&i| data[i].label == Label::NonMark)
            .count();
        rows[index] = Some(SweepRow {
            kind: cfg.kind,
            epsilon: cfg.epsilon,
            k: cfg.k,
            kappa: cfg.kappa,
            loss: cfg.loss,
            direction: cfg.direction,
            eligible: eligible.len(),
            attacked: results.len(),
            carried_in,
            successes: carried.len(),
            success_over,
            success_under: carried.len() - success_over,
            robust_accuracy: 1.0 - carried.len() as f64 / eligible.len() as f64,
            mean_steps: if results.is_empty() {
                0.0
            } else {
                steps_total as f64 / results.len() as f64
            },
        });
        examples[index] = results;
    }

    Ok(SweepOutcome {
        rows: rows.into_iter().map(|r| r.expect("row filled")).collect(),
        examples,
    })
}

/// Write a sweep table as CSV. Header:
/// `kind,epsilon,k,kappa,loss,direction,eligible,attacked,carried_in,successes,success_over,success_under,robust_accuracy,mean_steps`;
/// budget fields a kind does not use are left empty.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row).map_err(|e| csv_io(path, e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Read a sweep table back (inverse of [`write_sweep_csv`]).
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(file);
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_io(path, e)))
        .collect()
}

fn csv_io(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
        other => Error::malformed("csv", format!("{}: {other:?}", path.display())),
    }
}
