//! `train`: fit a classifier on a generated dataset directory.

use serde::Serialize;

use bubblebench_core::classifier::{
    evaluate, save_model, train, write_history_csv, ModelKind, TrainConfig,
};
use bubblebench_core::synth::{load_dataset, split_images, Split};

use super::{
    bad_args, computation, finish_stage, read_input, require_exists, start_stage, CmdResult,
    Ctx, Failure,
};
use crate::manifest::write_new;

/// Record of what the run trained on, stored beside the model.
#[derive(Serialize)]
struct TrainRecord<'a> {
    dataset: String,
    model: ModelKind,
    config: &'a TrainConfig,
    final_train_accuracy: f64,
    final_val_accuracy: f64,
}

pub fn train_cmd(ctx: &Ctx, dataset_flag: Option<&std::path::Path>) -> CmdResult {
    let section = ctx.config.train.clone().unwrap_or_default();
    let kind = section.model.unwrap_or(ModelKind::Linear);

    // An explicit config is taken as-is; otherwise start from defaults,
    // dropping the learning rate for the two-layer net, whose loss
    // diverges at the perceptron's default 0.1.
    let mut cfg = section.config.clone().unwrap_or_else(|| {
        let mut cfg = TrainConfig::default();
        if kind == ModelKind::Mlp {
            cfg.learning_rate = 0.02;
        }
        cfg
    });
    cfg.seed = ctx.seed(section.seed, cfg.seed);
    cfg.validate().map_err(bad_args)?;

    let dataset_dir = dataset_flag
        .map(|p| p.to_path_buf())
        .or(section.dataset.clone())
        .unwrap_or_else(|| ctx.default_input("dataset"));
    require_exists(&dataset_dir, "dataset directory")?;

    let (images, manifest) = load_dataset(&dataset_dir).map_err(read_input)?;
    let train_set = split_images(&images, &manifest, Split::Train);
    let val_set = split_images(&images, &manifest, Split::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Failure::Infeasible(format!(
            "dataset {} has {} train and {} val rows; both splits must be nonempty",
            dataset_dir.display(),
            train_set.len(),
            val_set.len()
        )));
    }

    let (model, history) = train(&train_set, &val_set, kind, &cfg).map_err(computation)?;
    let val_eval = evaluate(&model, &val_set).map_err(computation)?;
    let last = history.last().expect("training produces at least one epoch");

    let dir = ctx.stage_dir("train");
    start_stage(&dir)?;

    let model_path = dir.join("model.bblm");
    save_model(&model_path, &model).map_err(super::write_output)?;
    write_history_csv(&dir.join("history.csv"), &history).map_err(super::write_output)?;
    let record = TrainRecord {
        dataset: dataset_dir.display().to_string(),
        model: kind,
        config: &cfg,
        final_train_accuracy: last.train_acc,
        final_val_accuracy: last.val_acc,
    };
    let record_json =
        serde_json::to_string_pretty(&record).map_err(|e| Failure::Internal(e.to_string()))?;
    write_new(&dir.join("train_record.json"), record_json.as_bytes())
        .map_err(super::write_output)?;

    println!(
        "trained {} model for {} epochs (seed {})",
        match kind {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        },
        history.len(),
        cfg.seed
    );
    println!(
        "final train accuracy = {:.4}, validation accuracy = {:.4}",
        last.train_acc, val_eval.accuracy
    );
    for (mark_type, acc) in &val_eval.per_mark_type {
        println!("  val {:>9}: {acc:.4}", mark_type.as_str());
    }
    println!("model written to {}", model_path.display());

    let mut manifest_out = ctx.manifest("train", cfg.seed);
    manifest_out
        .add_input("dataset", &dataset_dir)
        .map_err(read_input)?;
    finish_stage(&dir, manifest_out)
}
