//! On-disk format for an attacked example set.
//!
//! One attack row persists as a directory:
//!
//! ```text
//! a03_l0/
//!   attack_config.json   # the exact configuration that ran
//!   adv_manifest.csv     # path,dataset_index,label,mark_type,success,...
//!   images/00042_adv.pgm # one 8-bit PGM per attacked example
//! ```
//!
//! PGM encoding rounds to 256 levels, which is precisely the printable
//! artifact the channel stage consumes — so a saved-and-reloaded set
//! scans identically to one evaluated in memory. What PGM cannot hold
//! (the loss value, step counts) rides in the manifest, making a reload
//! faithful enough to reproduce both accuracy tables and fidelity
//! metrics.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bubblebench_core::attack::{AdvExample, AttackConfig};
use bubblebench_core::synth::pgm::{load_pgm, save_pgm};
use bubblebench_core::{BubbleImage, Error, Label, MarkType, Result};

use crate::manifest::{ensure_dir, write_new};

/// One line of `adv_manifest.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvRow {
    /// Image path relative to the set directory.
    pub path: String,
    /// Position of the clean original in the attacked dataset slice.
    pub dataset_index: usize,
    pub label: Label,
    pub mark_type: MarkType,
    pub success: bool,
    pub final_loss: f64,
    pub steps_used: usize,
    pub restart_index: usize,
}

/// Directory name for one sweep row: `a<row>_<kind>`, zero-padded so
/// lexicographic order equals row order.
pub fn row_dir_name(row_index: usize, kind_name: &str) -> String {
    format!("a{row_index:02}_{kind_name}")
}

/// Persist one attacked set (config, manifest, and one PGM per
/// example) under `dir`, which must not already hold a set.
pub fn save_adv_set(
    dir: &Path,
    data: &[BubbleImage],
    results: &[(usize, AdvExample)],
    cfg: &AttackConfig,
) -> Result<()> {
    ensure_dir(&dir.join("images"))?;

    let config_json = serde_json::to_string_pretty(cfg)
        .map_err(|e| Error::malformed("attack config", e.to_string()))?;
    write_new(&dir.join("attack_config.json"), config_json.as_bytes())?;

    let mut rows = Vec::with_capacity(results.len());
    for (idx, adv) in results {
        let image = data.get(*idx).ok_or_else(|| {
            Error::invalid(format!(
                "adversarial example references image {idx}, but the dataset \
                 slice has {} images",
                data.len()
            ))
        })?;
        let rel = format!("images/{idx:05}_adv.pgm");
        save_pgm(&dir.join(&rel), &adv.x_adv)?;
        rows.push(AdvRow {
            path: rel,
            dataset_index: *idx,
            label: image.label,
            mark_type: image.mark_type,
            success: adv.success,
            final_loss: adv.final_loss,
            steps_used: adv.steps_used,
            restart_index: adv.restart_index,
        });
    }

    let manifest_path = dir.join("adv_manifest.csv");
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| Error::malformed("adv manifest", e.to_string()))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::malformed("adv manifest", e.to_string()))?;
    write_new(&manifest_path, &body)
}

/// Reload a set written by [`save_adv_set`].
///
/// Pixels come back on the 1/255 grid — the print artifact — and the
/// manifest's labels are checked against `data` so a set cannot be
/// silently applied to the wrong dataset slice.
pub fn load_adv_set(
    dir: &Path,
    data: &[BubbleImage],
) -> Result<(AttackConfig, Vec<(usize, AdvExample)>)> {
    let config_path = dir.join("attack_config.json");
    let config_bytes = std::fs::read(&config_path)
        .map_err(|e| Error::io(config_path.display().to_string(), e))?;
    let cfg: AttackConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| Error::malformed("attack config", e.to_string()))?;

    let manifest_path = dir.join("adv_manifest.csv");
    let file = std::fs::File::open(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(file);
    let rows: Vec<AdvRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| {
            Error::malformed(
                "adv manifest",
                format!("{}: {e}", manifest_path.display()),
            )
        })?;

    let mut seen = BTreeSet::new();
    let mut results = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert(row.dataset_index) {
            return Err(Error::malformed(
                "adv manifest",
                format!("duplicate dataset index {}", row.dataset_index),
            ));
        }
        let image = data.get(row.dataset_index).ok_or_else(|| {
            Error::malformed(
                "adv manifest",
                format!(
                    "dataset index {} out of range for a slice of {}",
                    row.dataset_index,
                    data.len()
                ),
            )
        })?;
        if image.label != row.label || image.mark_type != row.mark_type {
            return Err(Error::malformed(
                "adv manifest",
                format!(
                    "row {} disagrees with the dataset ({} vs {})",
                    row.dataset_index,
                    row.mark_type.as_str(),
                    image.mark_type.as_str()
                ),
            ));
        }
        let rel = PathBuf::from(&row.path);
        if rel.is_absolute()
            || rel
                .components()
                .any(|c| matches!(c, std::path::Component::ParentDir))
        {
            return Err(Error::malformed(
                "adv manifest",
                format!("path {} escapes the set directory", row.path),
            ));
        }
        let x_adv = load_pgm(&dir.join(&rel))?;
        results.push((
            row.dataset_index,
            AdvExample {
                x_adv,
                success: row.success,
                final_loss: row.final_loss,
                steps_used: row.steps_used,
                restart_index: row.restart_index,
            },
        ));
    }
    results.sort_by_key(|(idx, _)| *idx);
    Ok((cfg, results))
}

/// List the attacked-set directories under an attack output directory,
/// sorted by name (hence by row).
pub fn list_adv_set_dirs(attack_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(attack_dir)
        .map_err(|e| Error::io(attack_dir.display().to_string(), e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(attack_dir.display().to_string(), e))?;
        let path = entry.path();
        let is_set = path.is_dir()
            && path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('a'))
            && path.join("adv_manifest.csv").is_file();
        if is_set {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bubblebench_core::attack::{attack_dataset, AttackKind};
    use bubblebench_core::classifier::{LinearTwoLogit, Model};
    use bubblebench_core::rng::Stream;
    use bubblebench_core::{Raster, PIXELS};

    fn fixture() -> (Model, Vec<BubbleImage>) {
        let mut rng = Stream::new(4, 0);
        let weights: Vec<f64> = (0..PIXELS).map(|_| rng.uniform_in(-0.01, 0.01)).collect();
        let model = Model::Linear(LinearTwoLogit::new(weights, 0.0).unwrap());
        let data: Vec<BubbleImage> = (0..6)
            .map(|i| {
                let mark_type = if i % 2 == 0 {
                    MarkType::Blank
                } else {
                    MarkType::Filled
                };
                let pixels = Raster::from_vec(
                    (0..PIXELS)
                        .map(|_| rng.uniform_in(0.2, 0.8))
                        .collect::<Vec<_>>(),
                )
                .unwrap();
                BubbleImage::new(pixels, mark_type).unwrap()
            })
            .collect();
        (model, data)
    }

    fn small_cfg() -> AttackConfig {
        let mut cfg = AttackConfig::for_constraint(
            bubblebench_core::attack::NormConstraint::linf(0.5).unwrap(),
        );
        cfg.steps = 10;
        cfg.restarts = 1;
        cfg
    }

    #[test]
    fn adv_set_round_trips_through_disk() {
        let (model, data) = fixture();
        let cfg = small_cfg();
        let results = attack_dataset(&model, &data, &cfg).unwrap();
        assert!(!results.is_empty());

        let dir = tempfile::tempdir().unwrap();
        let set_dir = dir.path().join(row_dir_name(0, AttackKind::Linf.as_str()));
        save_adv_set(&set_dir, &data, &results, &cfg).unwrap();

        let (cfg_back, back) = load_adv_set(&set_dir, &data).unwrap();
        assert_eq!(cfg_back, cfg);
        assert_eq!(back.len(), results.len());
        for ((i, loaded), (j, original)) in back.iter().zip(&results) {
            assert_eq!(i, j);
            assert_eq!(loaded.success, original.success);
            assert_eq!(loaded.final_loss, original.final_loss);
            assert_eq!(loaded.steps_used, original.steps_used);
            assert_eq!(loaded.restart_index, original.restart_index);
            // Pixels round-trip through the 8-bit grid: within half a
            // level of the in-memory adversarial image.
            for (a, b) in loaded.x_adv.data().iter().zip(original.x_adv.data()) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn loading_against_the_wrong_dataset_is_rejected() {
        let (model, data) = fixture();
        let cfg = small_cfg();
        let results = attack_dataset(&model, &data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let set_dir = dir.path().join("a00_linf");
        save_adv_set(&set_dir, &data, &results, &cfg).unwrap();

        // Same images, labels shuffled by one: manifest disagrees.
        let mut wrong = data.clone();
        wrong.rotate_left(1);
        assert!(load_adv_set(&set_dir, &wrong).is_err());

        // Truncated dataset: indices fall out of range.
        assert!(load_adv_set(&set_dir, &data[..2]).is_err());
    }

    #[test]
    fn manifest_paths_may_not_escape_the_directory() {
        let (model, data) = fixture();
        let cfg = small_cfg();
        let results = attack_dataset(&model, &data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let set_dir = dir.path().join("a00_linf");
        save_adv_set(&set_dir, &data, &results, &cfg).unwrap();

        let manifest_path = set_dir.join("adv_manifest.csv");
        let doctored = std::fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("images/", "../images/");
        std::fs::write(&manifest_path, doctored).unwrap();
        assert!(load_adv_set(&set_dir, &data).is_err());
    }

    #[test]
    fn set_directories_list_in_row_order() {
        let (model, data) = fixture();
        let cfg = small_cfg();
        let results = attack_dataset(&model, &data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (row, kind) in [(2usize, "l1"), (0, "linf"), (1, "l2")] {
            save_adv_set(&dir.path().join(row_dir_name(row, kind)), &data, &results, &cfg)
                .unwrap();
        }
        std::fs::write(dir.path().join("sweep.csv"), b"not a set").unwrap();

        let dirs = list_adv_set_dirs(dir.path()).unwrap();
        let names: Vec<_> = dirs
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_string())
            .collect();
        assert_eq!(names, ["a00_linf", "a01_l2", "a02_l1"]);
    }
}
