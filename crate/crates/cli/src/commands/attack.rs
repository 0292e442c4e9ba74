//! `attack`: run a digital attack sweep against a trained model.
//!
//! Two built-in suites cover the experiments: `imperceptible` (one
//! calibrated budget per kind, adversarial images saved for the channel
//! stage) and `grid` (every kind over its full budget grid with
//! carry-forward, table only). A `configs` list in the attack section
//! replaces the suite entirely.

use std::path::Path;

use bubblebench_core::attack::{
    attack_sweep_detailed, grid_constraints, imperceptible_constraints, AttackConfig,
    DEFAULT_KAPPA,
};
use bubblebench_core::classifier::load_model;
use bubblebench_core::synth::{load_dataset, split_images, Split};

use super::{
    bad_args, computation, finish_stage, read_input, require_exists, require_fresh,
    start_stage, CmdResult, Ctx, Failure,
};
use crate::adv_io::{row_dir_name, save_adv_set};
use crate::config::SplitChoice;
use crate::manifest::write_new;
use crate::rows::{budget_label, AttackMeta};

pub struct AttackFlags<'a> {
    pub model: Option<&'a Path>,
    pub dataset: Option<&'a Path>,
    pub suite: Option<&'a str>,
}

pub fn attack_cmd(ctx: &Ctx, flags: &AttackFlags) -> CmdResult {
    let section = ctx.config.attack.clone().unwrap_or_default();
    let seed = ctx.seed(section.seed, 0);
    let seed_given =
        ctx.seed_flag.is_some() || section.seed.is_some() || ctx.config.seed.is_some();
    let kappa = section.kappa.unwrap_or(DEFAULT_KAPPA);

    // Resolve the row list: explicit configs, or a named suite.
    let suite_requested = flags.suite.or(section.suite.as_deref());
    if suite_requested.is_some() && section.configs.is_some() {
        return Err(Failure::Usage(
            "attack section sets both `suite` and `configs`; pick one".into(),
        ));
    }
    let (suite_name, mut configs) = match &section.configs {
        Some(list) if list.is_empty() => {
            return Err(Failure::Usage("attack `configs` list is empty".into()))
        }
        Some(list) => ("custom".to_string(), list.clone()),
        None => {
            let name = suite_requested.unwrap_or("imperceptible");
            let constraints = match name {
                "imperceptible" => imperceptible_constraints(kappa)
                    .map_err(bad_args)?
                    .to_vec(),
                "grid" => grid_constraints(kappa).map_err(bad_args)?,
                other => {
                    return Err(Failure::Usage(format!(
                        "unknown attack suite `{other}` (expected imperceptible or grid)"
                    )))
                }
            };
            (
                name.to_string(),
                constraints
                    .into_iter()
                    .map(AttackConfig::for_constraint)
                    .collect(),
            )
        }
    };
    for cfg in &mut configs {
        if let Some(steps) = section.steps {
            cfg.steps = steps;
        }
        if let Some(restarts) = section.restarts {
            cfg.restarts = restarts;
        }
        if let Some(loss) = section.loss {
            cfg.loss = loss;
        }
        if let Some(direction) = section.direction {
            cfg.direction = direction;
        }
        // Suite rows always take the resolved seed; explicit configs
        // keep their own unless the user set a seed somewhere.
        if suite_name != "custom" || seed_given {
            cfg.seed = seed;
        }
        cfg.validate().map_err(bad_args)?;
    }
    let save_adv = section.save_adv.unwrap_or(suite_name != "grid");

    // Inputs.
    let model_path = flags
        .model
        .map(Path::to_path_buf)
        .or(section.model.clone())
        .unwrap_or_else(|| ctx.default_input("train").join("model.bblm"));
    require_exists(&model_path, "model file")?;
    let model = load_model(&model_path).map_err(read_input)?;

    let dataset_dir = flags
        .dataset
        .map(Path::to_path_buf)
        .or(section.dataset.clone())
        .unwrap_or_else(|| ctx.default_input("dataset"));
    require_exists(&dataset_dir, "dataset directory")?;
    let (images, manifest) = load_dataset(&dataset_dir).map_err(read_input)?;

    let split = section.split.unwrap_or_default();
    let slice = dataset_slice(&images, &manifest, split);
    if slice.is_empty() {
        return Err(Failure::Infeasible(format!(
            "dataset {} has no rows in the `{}` split",
            dataset_dir.display(),
            split.as_str()
        )));
    }

    println!(
        "attacking {} `{}` images with {} configurations (suite {suite_name}, seed {seed})",
        slice.len(),
        split.as_str(),
        configs.len()
    );
    let outcome = attack_sweep_detailed(&model, &slice, &configs).map_err(computation)?;

    let dir = ctx.stage_dir("attack");
    start_stage(&dir)?;

    let sweep_path = dir.join("sweep.csv");
    require_fresh(&sweep_path)?;
    bubblebench_core::attack::write_sweep_csv(&sweep_path, &outcome.rows)
        .map_err(super::write_output)?;

    let mut saved_sets = 0usize;
    if save_adv {
        for (index, (cfg, examples)) in configs.iter().zip(&outcome.examples).enumerate() {
            if examples.is_empty() {
                continue;
            }
            let set_dir = dir.join(row_dir_name(index, cfg.kind.as_str()));
            save_adv_set(&set_dir, &slice, examples, cfg).map_err(super::write_output)?;
            saved_sets += 1;
        }
    }

    let meta = AttackMeta {
        dataset: dataset_dir.display().to_string(),
        split,
        suite: suite_name.clone(),
        kappa,
        seed,
        rows: configs.len(),
        saved_sets,
    };
    let meta_json =
        serde_json::to_string_pretty(&meta).map_err(|e| Failure::Internal(e.to_string()))?;
    write_new(&dir.join("attack_meta.json"), meta_json.as_bytes())
        .map_err(super::write_output)?;

    for (index, row) in outcome.rows.iter().enumerate() {
        println!(
            "  a{index:02} {:<8} {:<18} robust_accuracy={:.4} successes={}/{} attacked={}",
            row.kind.as_str(),
            budget_label(row.kind, row.epsilon, row.k, row.kappa),
            row.robust_accuracy,
            row.successes,
            row.eligible,
            row.attacked,
        );
    }
    println!(
        "sweep written to {} ({saved_sets} adversarial sets saved)",
        sweep_path.display()
    );

    let mut manifest_out = ctx.manifest("attack", seed);
    manifest_out.add_input("model", &model_path).map_err(read_input)?;
    manifest_out
        .add_input("dataset", &dataset_dir)
        .map_err(read_input)?;
    finish_stage(&dir, manifest_out)
}

/// Materialize the images a split choice refers to, in manifest order.
pub fn dataset_slice(
    images: &[bubblebench_core::BubbleImage],
    manifest: &bubblebench_core::synth::DatasetManifest,
    split: SplitChoice,
) -> Vec<bubblebench_core::BubbleImage> {
    match split {
        SplitChoice::Train => split_images(images, manifest, Split::Train),
        SplitChoice::Val => split_images(images, manifest, Split::Val),
        SplitChoice::All => images.to_vec(),
    }
}
