//! Helpers shared by the CLI integration tests: spawning the compiled
//! binary with a controlled working directory and writing experiment
//! configs.

use std::path::Path;
use std::process::Command;

/// Path to the compiled `bubblebench` binary under test.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bubblebench")
}

/// Captured outcome of one binary invocation.
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Run the binary with `args` from `cwd` and capture everything.
pub fn run_in(cwd: &Path, args: &[&str]) -> Run {
    let output = Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary spawns");
    Run {
        code: output.status.code().expect("terminated by signal"),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

/// Run the binary and insist on exit 0, with full output in the panic
/// message when it is not.
pub fn run_ok(cwd: &Path, args: &[&str]) -> Run {
    let run = run_in(cwd, args);
    assert_eq!(
        run.code, 0,
        "command {args:?} exited {}\n--- stdout ---\n{}--- stderr ---\n{}",
        run.code, run.stdout, run.stderr
    );
    run
}

/// Write an experiment config file.
pub fn write_config(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_vec_pretty(value).expect("valid json"))
        .expect("config written");
}

/// Run the five artifact stages against one config, in pipeline order.
pub fn run_pipeline(cwd: &Path, config: &Path, extra: &[&str]) {
    let config = config.to_str().expect("utf-8 path");
    for stage in ["gen-data", "train", "attack", "channel", "report"] {
        let mut args = vec![stage, "-c", config];
        args.extend_from_slice(extra);
        run_ok(cwd, &args);
    }
}
