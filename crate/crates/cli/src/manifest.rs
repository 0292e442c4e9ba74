//! Run manifests: what a command read, what it wrote, and the seed it
//! ran under, all pinned by content hash.
//!
//! Every subcommand that produces artifacts finishes by writing a
//! `run_manifest.json` into its output directory. The manifest carries
//! no timestamps or host details, so re-running the same command on the
//! same inputs yields a byte-identical file — which is exactly the
//! reproducibility check the pipeline test performs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bubblebench_core::{Error, Result};

/// Hex-encoded SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Hash one file's contents.
pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Collect every file under `root` (recursively) as `/`-separated paths
/// relative to `root`, sorted lexicographically.
pub fn list_files_sorted(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        let entries =
            fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .to_path_buf();
                out.push(rel);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, root, &mut files)?;
    files.sort();
    Ok(files)
}

/// Hash a directory: the digest of every contained file's relative path
/// and content hash, in sorted order. Stable across platforms and
/// insensitive to directory-listing order.
pub fn hash_dir(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for rel in list_files_sorted(root)? {
        let rel_str = rel
            .to_str()
            .ok_or_else(|| Error::invalid(format!("non-utf8 path under {}", root.display())))?
            .replace('\\', "/");
        hasher.update(rel_str.as_bytes());
        hasher.update([0]);
        hasher.update(hash_file(&root.join(&rel))?.as_bytes());
        hasher.update([b'\n']);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}

/// Hash a path, dispatching on file vs directory.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        hash_dir(path)
    } else {
        hash_file(path)
    }
}

/// Record of one command invocation: inputs and outputs by content
/// hash, plus the seed that made the run deterministic.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunManifest {
    /// Subcommand name, e.g. `gen-data`.
    pub command: String,
    /// The seed the command actually used after precedence resolution.
    pub effective_seed: u64,
    /// Hash of the configuration document, when one was supplied.
    pub config_sha256: Option<String>,
    /// Input label -> content hash (directories hash their full tree).
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the manifest's directory) -> file hash.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, effective_seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            effective_seed,
            ..RunManifest::default()
        }
    }

    /// Record an input by label; directories are hashed as trees.
    pub fn add_input(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs
            .insert(label.to_string(), hash_path(path)?);
        Ok(())
    }

    /// Record every file currently under `dir` as an output.
    pub fn add_outputs_under(&mut self, dir: &Path) -> Result<()> {
        for rel in list_files_sorted(dir)? {
            let rel_str = rel
                .to_str()
                .ok_or_else(|| {
                    Error::invalid(format!("non-utf8 path under {}", dir.display()))
                })?
                .replace('\\', "/");
            if rel_str == MANIFEST_NAME {
                continue;
            }
            self.outputs.insert(rel_str, hash_file(&dir.join(&rel))?);
        }
        Ok(())
    }
}

/// File name every run manifest is written under.
pub const MANIFEST_NAME: &str = "run_manifest.json";

/// Serialize `manifest` into `dir/run_manifest.json` (write-once).
pub fn write_run_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::malformed("run manifest", e.to_string()))?;
    write_new(&dir.join(MANIFEST_NAME), body.as_bytes())
}

/// Read a `run_manifest.json` back.
pub fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_NAME);
    let bytes = fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::malformed("run manifest", e.to_string()))
}

/// Create a file that must not already exist and write `bytes` to it.
///
/// Artifacts are write-once: refusing to overwrite keeps a re-run from
/// silently clobbering results it should instead reproduce elsewhere.
pub fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::options()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Create a directory (and parents) if missing.
pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_the_known_empty_string_digest() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn dir_hash_depends_on_content_and_names_not_creation_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), b"two").unwrap();
        fs::write(dir.path().join("a.txt"), b"one").unwrap();
        let first = hash_dir(dir.path()).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        fs::write(dir2.path().join("a.txt"), b"one").unwrap();
        fs::write(dir2.path().join("b.txt"), b"two").unwrap();
        assert_eq!(first, hash_dir(dir2.path()).unwrap());

        fs::write(dir2.path().join("a.txt"), b"changed").unwrap();
        assert_ne!(first, hash_dir(dir2.path()).unwrap());
    }

    #[test]
    fn manifest_round_trips_and_skips_itself_in_outputs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("result.csv"), b"k,v\n").unwrap();

        let mut manifest = RunManifest::new("gen-data", 7);
        manifest.add_outputs_under(dir.path()).unwrap();
        write_run_manifest(dir.path(), &manifest).unwrap();

        let back = read_run_manifest(dir.path()).unwrap();
        assert_eq!(back, manifest);
        assert!(back.outputs.contains_key("result.csv"));
        assert!(!back.outputs.contains_key(MANIFEST_NAME));
    }

    #[test]
    fn write_new_refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("once.txt");
        write_new(&path, b"first").unwrap();
        assert!(write_new(&path, b"second").is_err());
        assert_eq!(fs::read(&path).unwrap(), b"first");
    }
}
