//! End-to-end check that the trainer separates the synthetic corpus:
//! generated data in, calibrated model out, accuracies where the
//! dataset design says they should be.

use bubblebench_core::classifier::{evaluate, train, ModelKind, TrainConfig};
use bubblebench_core::image::MarkType;
use bubblebench_core::synth::{generate_dataset, split_images, DatasetSpec, Split};

fn shrink(spec: &mut DatasetSpec, factor: usize) {
    for count in spec.counts.values_mut() {
        *count = (*count / factor).max(4);
    }
}

#[test]
fn perceptron_separates_bubbles_corpus() {
    let mut spec = DatasetSpec::bubbles_small(31);
    shrink(&mut spec, 5); // 1000 images
    let (images, manifest) = generate_dataset(&spec).unwrap();
    let train_set = split_images(&images, &manifest, Split::Train);
    let val_set = split_images(&images, &manifest, Split::Val);

    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let (model, history) = train(&train_set, &val_set, ModelKind::Linear, &cfg).unwrap();
    let val = evaluate(&model, &val_set).unwrap();
    assert!(
        val.accuracy >= 0.99,
        "bubbles val accuracy {}",
        val.accuracy
    );
    assert_eq!(history.len(), cfg.epochs);
}

#[test]
fn perceptron_handles_marginal_marks() {
    let mut spec = DatasetSpec::combined_small(32);
    shrink(&mut spec, 5); // 1000 images, all seven families
    let (images, manifest) = generate_dataset(&spec).unwrap();
    let train_set = split_images(&images, &manifest, Split::Train);
    let val_set = split_images(&images, &manifest, Split::Val);

    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let (model, _) = train(&train_set, &val_set, ModelKind::Linear, &cfg).unwrap();
    let val = evaluate(&model, &val_set).unwrap();
    println!("combined val accuracy: {}", val.accuracy);
    for (mark_type, acc) in &val.per_mark_type {
        println!("  {:>9}: {acc}", mark_type.as_str());
    }
    assert!(
        val.accuracy >= 0.95,
        "combined val accuracy {}",
        val.accuracy
    );
    // The hard families should not be collapsing to the majority class.
    assert!(val.per_mark_type[&MarkType::Penrest] >= 0.8);
    assert!(val.per_mark_type[&MarkType::Scribble] >= 0.8);
}

#[test]
fn mlp_matches_or_beats_perceptron_on_combined() {
    let mut spec = DatasetSpec::combined_small(33);
    shrink(&mut spec, 5); // 1000 images
    let (images, manifest) = generate_dataset(&spec).unwrap();
    let train_set = split_images(&images, &manifest, Split::Train);
    let val_set = split_images(&images, &manifest, Split::Val);

    // The two-layer net wants a gentler rate than the perceptron
    // default; 0.1 visibly diverges here.
    let cfg = TrainConfig {
        hidden: 64,
        learning_rate: 0.01,
        seed: 7,
        ..TrainConfig::default()
    };
    let (model, _) = train(&train_set, &val_set, ModelKind::Mlp, &cfg).unwrap();
    let val = evaluate(&model, &val_set).unwrap();
    println!("mlp combined val accuracy: {}", val.accuracy);
    assert!(val.accuracy >= 0.97, "mlp val accuracy {}", val.accuracy);
}
