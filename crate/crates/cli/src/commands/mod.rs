//! Subcommand implementations and the exit-code policy they share.
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 2    | infeasible result or failed assertion/validation gate |
//! | 64   | usage: bad flags, bad config, or an output collision |
//! | 66   | a named input path does not exist                    |
//! | 70   | internal error                                       |
//!
//! Classification is contextual: the same library error means
//! different things depending on whether it arose parsing user input
//! (64), opening an upstream artifact (66 when missing, 2 when present
//! but corrupt — the artifact failed its validation), or writing
//! output (64 on collision with an earlier run, 70 otherwise).

pub mod attack;
pub mod channel;
pub mod election;
pub mod gen_data;
pub mod report;
pub mod train;

use std::fmt;
use std::path::{Path, PathBuf};

use bubblebench_core::Error;

use crate::config::ExperimentConfig;
use crate::manifest::{ensure_dir, write_run_manifest, RunManifest, MANIFEST_NAME};

/// A command failure carrying its exit code and message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// Exit 64: the invocation itself is wrong.
    Usage(String),
    /// Exit 2: inputs were understood but the result is infeasible or
    /// an assertion/validation gate failed.
    Infeasible(String),
    /// Exit 66: a required input path does not exist.
    MissingInput(String),
    /// Exit 70: a defect or environmental failure.
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Infeasible(_) => 2,
            Failure::MissingInput(_) => 66,
            Failure::Internal(_) => 70,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Infeasible(msg) => write!(f, "{msg}"),
            Failure::MissingInput(msg) => write!(f, "missing input: {msg}"),
            Failure::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

/// Classify an error from parsing flags or configuration.
pub fn bad_args(err: impl fmt::Display) -> Failure {
    Failure::Usage(err.to_string())
}

/// Classify an error from reading an upstream artifact: missing file →
/// 66, present-but-invalid → 2, anything else → 70.
pub fn read_input(err: Error) -> Failure {
    if err.is_not_found() {
        return Failure::MissingInput(err.to_string());
    }
    match err {
        Error::Malformed { .. } | Error::InvalidParameter(_) => {
            Failure::Infeasible(err.to_string())
        }
        Error::Io { .. } => Failure::Internal(err.to_string()),
    }
}

/// Classify an error from writing an output artifact: a collision with
/// an existing file → 64 (outputs are write-once), else → 70.
pub fn write_output(err: Error) -> Failure {
    if let Error::Io { ref path, ref source } = err {
        if source.kind() == std::io::ErrorKind::AlreadyExists {
            return Failure::Usage(format!(
                "{path} already exists; outputs are write-once, pick a fresh --out"
            ));
        }
    }
    Failure::Internal(err.to_string())
}

/// Classify an error from the computation itself (library invariants
/// violated by otherwise-valid inputs).
pub fn computation(err: Error) -> Failure {
    Failure::Infeasible(err.to_string())
}

/// Everything global a subcommand needs: the parsed configuration plus
/// the `--seed`/`--out` overrides.
pub struct Ctx {
    pub config: ExperimentConfig,
    /// SHA-256 of the raw config document, when `--config` was given.
    pub config_sha256: Option<String>,
    pub seed_flag: Option<u64>,
    pub out_flag: Option<PathBuf>,
}

impl Ctx {
    /// The output root: `out_dir` from the config, else the working
    /// directory.
    pub fn root(&self) -> PathBuf {
        self.config
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Where this stage writes: `--out` verbatim when given, else
    /// `<root>/<stage>`.
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_flag
            .clone()
            .unwrap_or_else(|| self.root().join(stage))
    }

    /// Where a stage's input defaults to when the config names no path:
    /// the producing stage's default output directory.
    pub fn default_input(&self, producer: &str) -> PathBuf {
        self.root().join(producer)
    }

    /// Effective seed: `--seed`, then the section seed, then the
    /// config's global seed, then `inner`.
    pub fn seed(&self, section: Option<u64>, inner: u64) -> u64 {
        crate::config::resolve_seed(self.seed_flag, section, self.config.seed, inner)
    }

    /// Start a manifest for this run, pre-loaded with the config hash.
    pub fn manifest(&self, command: &str, effective_seed: u64) -> RunManifest {
        let mut manifest = RunManifest::new(command, effective_seed);
        manifest.config_sha256 = self.config_sha256.clone();
        manifest
    }
}

/// Create the stage directory, refusing one that already holds a run.
pub fn start_stage(dir: &Path) -> CmdResult {
    if dir.join(MANIFEST_NAME).exists() {
        return Err(Failure::Usage(format!(
            "{} already contains a run; outputs are write-once, pick a fresh --out",
            dir.display()
        )));
    }
    ensure_dir(dir).map_err(write_output)
}

/// Hash everything written under `dir` into the manifest and persist
/// it, completing the stage.
pub fn finish_stage(dir: &Path, mut manifest: RunManifest) -> CmdResult {
    manifest.add_outputs_under(dir).map_err(write_output)?;
    write_run_manifest(dir, &manifest).map_err(write_output)
}

/// Require that an input path exists before handing it to a loader, so
/// a typoed path reports 66 with the path named rather than whatever
/// the loader hits first.
pub fn require_exists(path: &Path, role: &str) -> std::result::Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::MissingInput(format!(
            "{role} not found at {}",
            path.display()
        )))
    }
}

/// Refuse to hand a library writer a path that already exists (the
/// write-once rule for artifacts not written through [`crate::manifest::write_new`]).
pub fn require_fresh(path: &Path) -> CmdResult {
    if path.exists() {
        Err(Failure::Usage(format!(
            "{} already exists; outputs are write-once, pick a fresh --out",
            path.display()
        )))
    } else {
        Ok(())
    }
}

/// Serialize rows into a write-once CSV file with a header row.
pub fn write_csv_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> CmdResult {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Failure::Internal(e.to_string()))?;
    crate::manifest::write_new(path, &body).map_err(write_output)
}

/// Read rows from a CSV table written by a previous stage.
pub fn read_csv_rows<T: serde::de::DeserializeOwned>(
    path: &Path,
    role: &str,
) -> std::result::Result<Vec<T>, Failure> {
    require_exists(path, role)?;
    let file =
        std::fs::File::open(path).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Failure::Infeasible(format!("{role} {} is malformed: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_match_the_documented_policy() {
        assert_eq!(Failure::Usage(String::new()).code(), 64);
        assert_eq!(Failure::Infeasible(String::new()).code(), 2);
        assert_eq!(Failure::MissingInput(String::new()).code(), 66);
        assert_eq!(Failure::Internal(String::new()).code(), 70);
    }

    #[test]
    fn input_errors_classify_by_cause() {
        let missing = Error::io(
            "gone.bin",
            std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
        );
        assert_eq!(read_input(missing).code(), 66);

        let corrupt = Error::malformed("pgm", "bad magic");
        assert_eq!(read_input(corrupt).code(), 2);

        let transient = Error::io(
            "locked.bin",
            std::io::Error::new(std::io::ErrorKind::PermissionDenied, "locked"),
        );
        assert_eq!(read_input(transient).code(), 70);
    }

    #[test]
    fn output_collisions_are_usage_errors() {
        let collision = Error::io(
            "sweep.csv",
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "exists"),
        );
        assert_eq!(write_output(collision).code(), 64);

        let other = Error::io(
            "sweep.csv",
            std::io::Error::new(std::io::ErrorKind::Other, "disk"),
        );
        assert_eq!(write_output(other).code(), 70);
    }

    #[test]
    fn seed_and_directory_resolution_follow_the_ctx_rules() {
        let ctx = Ctx {
            config: ExperimentConfig {
                seed: Some(3),
                out_dir: Some(PathBuf::from("/tmp/run")),
                ..ExperimentConfig::default()
            },
            config_sha256: None,
            seed_flag: None,
            out_flag: None,
        };
        assert_eq!(ctx.seed(None, 0), 3);
        assert_eq!(ctx.seed(Some(5), 0), 5);
        assert_eq!(ctx.stage_dir("train"), PathBuf::from("/tmp/run/train"));
        assert_eq!(ctx.default_input("dataset"), PathBuf::from("/tmp/run/dataset"));

        let flagged = Ctx {
            out_flag: Some(PathBuf::from("/elsewhere")),
            seed_flag: Some(9),
            ..ctx
        };
        assert_eq!(flagged.seed(Some(5), 0), 9);
        assert_eq!(flagged.stage_dir("train"), PathBuf::from("/elsewhere"));
    }
}
