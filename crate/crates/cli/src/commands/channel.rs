//! `channel`: print-scan every saved adversarial set and measure what
//! survives.
//!
//! For each set directory under the attack output, the clean originals
//! and the 8-bit adversarial artifacts ride through the configured
//! channel (clean on even stream slots, adversarial on odd, exactly as
//! the library evaluates them), predictions are taken after affine
//! tonal calibration, and perturbation fidelity is averaged per set.

use std::path::{Path, PathBuf};

use bubblebench_core::channel::{
    fidelity_batch, physical_robust_accuracy, ChannelConfig,
};
use bubblebench_core::classifier::load_model;
use bubblebench_core::synth::load_dataset;

use super::{
    bad_args, computation, finish_stage, read_input, require_exists, start_stage, CmdResult,
    Ctx, Failure,
};
use crate::adv_io::{list_adv_set_dirs, load_adv_set};
use crate::commands::attack::dataset_slice;
use crate::manifest::write_new;
use crate::rows::{budget_label, AttackMeta, ChannelEvalRow, FidelityRow};

pub struct ChannelFlags<'a> {
    pub model: Option<&'a Path>,
    pub dataset: Option<&'a Path>,
    pub adv: Option<&'a Path>,
    pub preset: Option<&'a str>,
}

/// Label recorded in the `correction` column: predictions are taken
/// after the affine reference-patch calibration, nothing else.
const CORRECTION: &str = "affine_calibration";

pub fn channel_cmd(ctx: &Ctx, flags: &ChannelFlags) -> CmdResult {
    let section = ctx.config.channel.clone().unwrap_or_default();

    // Resolve the channel configuration: flag preset, section preset,
    // explicit section config, or the laser+scan default.
    if section.preset.is_some() && section.config.is_some() {
        return Err(Failure::Usage(
            "channel section sets both `preset` and `config`; pick one".into(),
        ));
    }
    let mut channel_cfg = if let Some(name) = flags.preset {
        ChannelConfig::preset(name).map_err(bad_args)?
    } else if let Some(name) = &section.preset {
        ChannelConfig::preset(name).map_err(bad_args)?
    } else if let Some(cfg) = section.config.clone() {
        cfg
    } else {
        ChannelConfig::laser_scan()
    };
    channel_cfg.seed = ctx.seed(section.seed, channel_cfg.seed);
    channel_cfg.validate().map_err(bad_args)?;

    // The attack output tells us which dataset slice the indices hit.
    let adv_dir = flags
        .adv
        .map(Path::to_path_buf)
        .or(section.adv.clone())
        .unwrap_or_else(|| ctx.default_input("attack"));
    require_exists(&adv_dir, "attack output directory")?;
    let meta_path = adv_dir.join("attack_meta.json");
    require_exists(&meta_path, "attack metadata")?;
    let meta_bytes = std::fs::read(&meta_path)
        .map_err(|e| Failure::Internal(format!("{}: {e}", meta_path.display())))?;
    let meta: AttackMeta = serde_json::from_slice(&meta_bytes).map_err(|e| {
        Failure::Infeasible(format!("attack metadata {} is malformed: {e}", meta_path.display()))
    })?;

    let dataset_dir = flags
        .dataset
        .map(Path::to_path_buf)
        .or(section.dataset.clone())
        .unwrap_or_else(|| PathBuf::from(&meta.dataset));
    require_exists(&dataset_dir, "dataset directory")?;
    let (images, manifest) = load_dataset(&dataset_dir).map_err(read_input)?;
    let slice = dataset_slice(&images, &manifest, meta.split);

    let model_path = flags
        .model
        .map(Path::to_path_buf)
        .or(section.model.clone())
        .unwrap_or_else(|| ctx.default_input("train").join("model.bblm"));
    require_exists(&model_path, "model file")?;
    let model = load_model(&model_path).map_err(read_input)?;

    let set_dirs = list_adv_set_dirs(&adv_dir).map_err(read_input)?;
    if set_dirs.is_empty() {
        return Err(Failure::Infeasible(format!(
            "no adversarial sets under {}; re-run the attack stage with save_adv",
            adv_dir.display()
        )));
    }

    println!(
        "scanning {} adversarial sets through the channel (seed {})",
        set_dirs.len(),
        channel_cfg.seed
    );

    let mut eval_rows = Vec::new();
    let mut fidelity_rows = Vec::new();
    for set_dir in &set_dirs {
        let set_name = set_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let (attack_cfg, adv_set) = load_adv_set(set_dir, &slice).map_err(read_input)?;
        if adv_set.is_empty() {
            println!("  {set_name}: empty set, skipped");
            continue;
        }

        let eval =
            physical_robust_accuracy(&model, &slice, &adv_set, &channel_cfg).map_err(computation)?;
        let fidelity = fidelity_batch(&slice, &adv_set, &channel_cfg).map_err(computation)?;
        let n = fidelity.len() as f64;
        let mean = |pick: fn(&bubblebench_core::channel::PerturbationMetrics) -> f64| {
            fidelity.iter().map(|(_, m)| pick(m)).sum::<f64>() / n
        };

        eval_rows.push(ChannelEvalRow {
            set: set_name.clone(),
            kind: attack_cfg.kind,
            epsilon: attack_cfg.epsilon,
            k: attack_cfg.k,
            kappa: attack_cfg.kappa,
            examples: adv_set.len(),
            channel_clean_accuracy: eval.channel_clean_accuracy,
            digital_robust_accuracy: eval.digital_robust_accuracy,
            physical_robust_accuracy: eval.physical_robust_accuracy,
            gap: eval.physical_robust_accuracy - eval.digital_robust_accuracy,
            correction: CORRECTION.to_string(),
        });
        fidelity_rows.push(FidelityRow {
            set: set_name.clone(),
            kind: attack_cfg.kind,
            epsilon: attack_cfg.epsilon,
            k: attack_cfg.k,
            kappa: attack_cfg.kappa,
            examples: adv_set.len(),
            rmse: mean(|m| m.rmse),
            kl_divergence: mean(|m| m.kl),
            ssim: mean(|m| m.ssim),
        });

        println!(
            "  {set_name:<12} {:<8} {:<18} digital={:.4} physical={:.4} clean={:.4}",
            attack_cfg.kind.as_str(),
            budget_label(attack_cfg.kind, attack_cfg.epsilon, attack_cfg.k, attack_cfg.kappa),
            eval.digital_robust_accuracy,
            eval.physical_robust_accuracy,
            eval.channel_clean_accuracy,
        );
    }
    if eval_rows.is_empty() {
        return Err(Failure::Infeasible(format!(
            "every adversarial set under {} was empty",
            adv_dir.display()
        )));
    }

    let dir = ctx.stage_dir("channel");
    start_stage(&dir)?;
    super::write_csv_rows(&dir.join("channel_eval.csv"), &eval_rows)?;
    super::write_csv_rows(&dir.join("fidelity.csv"), &fidelity_rows)?;
    let cfg_json = serde_json::to_string_pretty(&channel_cfg)
        .map_err(|e| Failure::Internal(e.to_string()))?;
    write_new(&dir.join("channel_config.json"), cfg_json.as_bytes())
        .map_err(super::write_output)?;

    let mut manifest_out = ctx.manifest("channel", channel_cfg.seed);
    manifest_out.add_input("model", &model_path).map_err(read_input)?;
    manifest_out
        .add_input("dataset", &dataset_dir)
        .map_err(read_input)?;
    manifest_out.add_input("adv", &adv_dir).map_err(read_input)?;
    finish_stage(&dir, manifest_out)
}
