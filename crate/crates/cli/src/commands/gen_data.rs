//! `gen-data`: synthesize a labeled bubble dataset directory.

use bubblebench_core::synth::{generate_dataset, save_dataset, DatasetSpec, Split};
use bubblebench_core::MarkType;

use super::{bad_args, finish_stage, start_stage, CmdResult, Ctx, Failure};
use crate::manifest::write_new;

/// Resolve the dataset recipe from the section and the `--preset` flag.
fn resolve_spec(ctx: &Ctx, preset_flag: Option<&str>, seed: u64) -> Result<DatasetSpec, Failure> {
    let section = ctx.config.dataset.clone().unwrap_or_default();
    if section.preset.is_some() && section.spec.is_some() {
        return Err(Failure::Usage(
            "dataset section sets both `preset` and `spec`; pick one".into(),
        ));
    }
    let mut spec = if let Some(name) = preset_flag {
        preset_spec(name, seed)?
    } else if let Some(name) = &section.preset {
        preset_spec(name, seed)?
    } else if let Some(spec) = section.spec {
        spec
    } else {
        DatasetSpec::combined_small(seed)
    };
    spec.seed = seed;
    spec.validate().map_err(bad_args)?;
    Ok(spec)
}

fn preset_spec(name: &str, seed: u64) -> Result<DatasetSpec, Failure> {
    match name {
        "bubbles_small" => Ok(DatasetSpec::bubbles_small(seed)),
        "combined_small" => Ok(DatasetSpec::combined_small(seed)),
        other => Err(Failure::Usage(format!(
            "unknown dataset preset `{other}` (expected bubbles_small or combined_small)"
        ))),
    }
}

pub fn gen_data(ctx: &Ctx, preset_flag: Option<&str>) -> CmdResult {
    let section = ctx.config.dataset.clone().unwrap_or_default();
    let inner_seed = section.spec.as_ref().map(|s| s.seed).unwrap_or(0);
    let seed = ctx.seed(section.seed, inner_seed);
    let spec = resolve_spec(ctx, preset_flag, seed)?;

    let dir = ctx.stage_dir("dataset");
    start_stage(&dir)?;

    let (images, manifest) = generate_dataset(&spec)
        .map_err(|e| Failure::Internal(e.to_string()))?;
    save_dataset(&dir, &images, &manifest).map_err(super::write_output)?;

    let spec_json = serde_json::to_string_pretty(&spec)
        .map_err(|e| Failure::Internal(e.to_string()))?;
    write_new(&dir.join("dataset_spec.json"), spec_json.as_bytes())
        .map_err(super::write_output)?;

    let train_rows = manifest.rows.iter().filter(|r| r.split == Split::Train).count();
    let val_rows = manifest.rows.len() - train_rows;
    println!(
        "generated {} images ({} train / {} val) under {}",
        images.len(),
        train_rows,
        val_rows,
        dir.display()
    );
    for mark_type in MarkType::ALL {
        let count = spec.counts.get(&mark_type).copied().unwrap_or(0);
        if count > 0 {
            println!("  {:>9}: {count}", mark_type.as_str());
        }
    }

    finish_stage(&dir, ctx.manifest("gen-data", seed))
}
