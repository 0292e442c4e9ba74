//! `report`: merge the sweep and channel tables into the three summary
//! CSVs (digital robust accuracy, physical gap, perturbation fidelity).
//!
//! Rows are re-sorted into canonical order — attack kinds in their
//! declaration order, budgets ascending — so reports from different
//! runs line up row by row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use bubblebench_core::attack::{read_sweep_csv, AttackKind, SweepRow};

use super::{
    finish_stage, read_input, require_exists, start_stage, CmdResult, Ctx, Failure,
};
use crate::rows::{budget_label, budget_scalar, kind_order, ChannelEvalRow, FidelityRow};

pub struct ReportFlags<'a> {
    pub attack_dir: Option<&'a Path>,
    pub channel_dir: Option<&'a Path>,
}

/// One row of `digital_robust_accuracy.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DigitalRow {
    kind: AttackKind,
    epsilon: Option<f64>,
    k: Option<usize>,
    kappa: Option<f64>,
    eligible: usize,
    successes: usize,
    robust_accuracy: f64,
}

/// One row of `physical_gap.csv`: the channel evaluation joined with
/// the sweep's digital robust accuracy for the same configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GapRow {
    kind: AttackKind,
    epsilon: Option<f64>,
    k: Option<usize>,
    kappa: Option<f64>,
    examples: usize,
    /// Robust accuracy from the sweep table (over all eligible
    /// examples); empty when the sweep has no matching row.
    sweep_robust_accuracy: Option<f64>,
    channel_clean_accuracy: f64,
    digital_robust_accuracy: f64,
    physical_robust_accuracy: f64,
    gap: f64,
    correction: String,
}

/// One row of `perturbation_fidelity.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FidelityOut {
    kind: AttackKind,
    epsilon: Option<f64>,
    k: Option<usize>,
    kappa: Option<f64>,
    examples: usize,
    rmse: f64,
    kl_divergence: f64,
    ssim: f64,
}

fn canonical<T>(rows: &mut [T], key: impl Fn(&T) -> (usize, f64)) {
    rows.sort_by(|a, b| {
        let (ka, ba) = key(a);
        let (kb, bb) = key(b);
        ka.cmp(&kb).then(ba.total_cmp(&bb))
    });
}

fn matches_config(row: &SweepRow, kind: AttackKind, epsilon: Option<f64>, k: Option<usize>, kappa: Option<f64>) -> bool {
    row.kind == kind && row.epsilon == epsilon && row.k == k && row.kappa == kappa
}

pub fn report_cmd(ctx: &Ctx, flags: &ReportFlags) -> CmdResult {
    let attack_dir = flags
        .attack_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.default_input("attack"));
    let sweep_path = attack_dir.join("sweep.csv");
    require_exists(&sweep_path, "sweep table")?;
    let sweep = read_sweep_csv(&sweep_path).map_err(read_input)?;
    if sweep.is_empty() {
        return Err(Failure::Infeasible(format!(
            "sweep table {} has no rows",
            sweep_path.display()
        )));
    }

    let mut digital: Vec<DigitalRow> = sweep
        .iter()
        .map(|row| DigitalRow {
            kind: row.kind,
            epsilon: row.epsilon,
            k: row.k,
            kappa: row.kappa,
            eligible: row.eligible,
            successes: row.successes,
            robust_accuracy: row.robust_accuracy,
        })
        .collect();
    canonical(&mut digital, |r| {
        (kind_order(r.kind), budget_scalar(r.kind, r.epsilon, r.k))
    });

    // Channel tables are optional: a pipeline that stopped after the
    // attack stage still gets the digital table.
    let channel_dir = flags
        .channel_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.default_input("channel"));
    let eval_path = channel_dir.join("channel_eval.csv");
    let fidelity_path = channel_dir.join("fidelity.csv");
    let channel_expected = flags.channel_dir.is_some();
    let have_channel = if channel_expected {
        require_exists(&eval_path, "channel evaluation table")?;
        require_exists(&fidelity_path, "fidelity table")?;
        true
    } else {
        eval_path.is_file() && fidelity_path.is_file()
    };

    let (mut gap_rows, mut fidelity_out) = (Vec::new(), Vec::new());
    if have_channel {
        let eval_rows: Vec<ChannelEvalRow> =
            super::read_csv_rows(&eval_path, "channel evaluation table")?;
        let fid_rows: Vec<FidelityRow> = super::read_csv_rows(&fidelity_path, "fidelity table")?;

        gap_rows = eval_rows
            .iter()
            .map(|row| GapRow {
                kind: row.kind,
                epsilon: row.epsilon,
                k: row.k,
                kappa: row.kappa,
                examples: row.examples,
                sweep_robust_accuracy: sweep
                    .iter()
                    .find(|s| matches_config(s, row.kind, row.epsilon, row.k, row.kappa))
                    .map(|s| s.robust_accuracy),
                channel_clean_accuracy: row.channel_clean_accuracy,
                digital_robust_accuracy: row.digital_robust_accuracy,
                physical_robust_accuracy: row.physical_robust_accuracy,
                gap: row.gap,
                correction: row.correction.clone(),
            })
            .collect();
        canonical(&mut gap_rows, |r| {
            (kind_order(r.kind), budget_scalar(r.kind, r.epsilon, r.k))
        });

        fidelity_out = fid_rows
            .iter()
            .map(|row| FidelityOut {
                kind: row.kind,
                epsilon: row.epsilon,
                k: row.k,
                kappa: row.kappa,
                examples: row.examples,
                rmse: row.rmse,
                kl_divergence: row.kl_divergence,
                ssim: row.ssim,
            })
            .collect();
        canonical(&mut fidelity_out, |r| {
            (kind_order(r.kind), budget_scalar(r.kind, r.epsilon, r.k))
        });
    }

    let dir = ctx.stage_dir("report");
    start_stage(&dir)?;
    super::write_csv_rows(&dir.join("digital_robust_accuracy.csv"), &digital)?;
    if have_channel {
        super::write_csv_rows(&dir.join("physical_gap.csv"), &gap_rows)?;
        super::write_csv_rows(&dir.join("perturbation_fidelity.csv"), &fidelity_out)?;
    }

    println!("digital robust accuracy:");
    println!("  {:<8} {:<18} {:>10} {:>12}", "kind", "budget", "robust", "flips");
    for row in &digital {
        println!(
            "  {:<8} {:<18} {:>10.4} {:>7}/{}",
            row.kind.as_str(),
            budget_label(row.kind, row.epsilon, row.k, row.kappa),
            row.robust_accuracy,
            row.successes,
            row.eligible,
        );
    }
    if have_channel {
        println!("physical vs digital (correction=affine_calibration):");
        println!(
            "  {:<8} {:<18} {:>6} {:>8} {:>8} {:>9} {:>8}",
            "kind", "budget", "n", "clean", "digital", "physical", "gap"
        );
        for row in &gap_rows {
            println!(
                "  {:<8} {:<18} {:>6} {:>8.4} {:>8.4} {:>9.4} {:>+8.4}",
                row.kind.as_str(),
                budget_label(row.kind, row.epsilon, row.k, row.kappa),
                row.examples,
                row.channel_clean_accuracy,
                row.digital_robust_accuracy,
                row.physical_robust_accuracy,
                row.gap,
            );
        }
        println!("perturbation fidelity (digital delta vs channel delta):");
        println!(
            "  {:<8} {:<18} {:>6} {:>9} {:>9} {:>8}",
            "kind", "budget", "n", "rmse", "kl", "ssim"
        );
        for row in &fidelity_out {
            println!(
                "  {:<8} {:<18} {:>6} {:>9.5} {:>9.5} {:>8.5}",
                row.kind.as_str(),
                budget_label(row.kind, row.epsilon, row.k, row.kappa),
                row.examples,
                row.rmse,
                row.kl_divergence,
                row.ssim,
            );
        }
    } else {
        println!("no channel tables found; physical gap and fidelity reports skipped");
    }
    println!("report written to {}", dir.display());

    let mut manifest_out = ctx.manifest("report", 0);
    manifest_out.add_input("sweep", &sweep_path).map_err(read_input)?;
    if have_channel {
        manifest_out
            .add_input("channel_eval", &eval_path)
            .map_err(read_input)?;
        manifest_out
            .add_input("fidelity", &fidelity_path)
            .map_err(read_input)?;
    }
    finish_stage(&dir, manifest_out)
}
