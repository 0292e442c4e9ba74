//! `pc-solve` and `validate`: the closed-form solver and its Monte
//! Carlo check.
//!
//! `pc-solve` requires all four election parameters (from flags or the
//! config's election section) and accepts repeated flags, expanding
//! their cartesian product into one row per grid point. `validate`
//! fills unspecified parameters from a built-in demo point instead, so
//! a bare `validate` is a self-contained end-to-end check.

use serde::{Deserialize, Serialize};

use bubblebench_core::election::{monte_carlo_success, solve_pc_star, VoteDistribution};

use super::{bad_args, finish_stage, start_stage, CmdResult, Ctx, Failure};
use crate::manifest::write_new;

/// Demo election used when `validate` is given no parameters.
const DEMO_P_B: f64 = 0.45;
const DEMO_DELTA: f64 = 0.04;
const DEMO_N: u64 = 100_000;
const DEMO_ALPHA: f64 = 0.05;
const DEMO_TRIALS: u64 = 10_000;

/// One grid point of `pc-solve` output (CSV row and JSON element).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PcRow {
    p_b: f64,
    delta: f64,
    n: u64,
    alpha: f64,
    p_c_star: Option<f64>,
    ballots_required: Option<u64>,
    k0: f64,
    k1: f64,
    k2: f64,
    z_value: f64,
    feasible: bool,
}

/// Flag values for `pc-solve`; each may repeat to form a grid.
pub struct PcSolveArgs {
    pub p_b: Vec<f64>,
    pub delta: Vec<f64>,
    pub n: Vec<u64>,
    pub alpha: Vec<f64>,
}

/// Flag values for `validate`.
pub struct ValidateArgs {
    pub p_b: Option<f64>,
    pub delta: Option<f64>,
    pub n: Option<u64>,
    pub alpha: Option<f64>,
    pub trials: Option<u64>,
    pub p_c: Option<f64>,
}

fn grid_axis<T: Copy>(
    flag: &[T],
    section: Option<T>,
    name: &str,
) -> Result<Vec<T>, Failure> {
    if !flag.is_empty() {
        Ok(flag.to_vec())
    } else if let Some(value) = section {
        Ok(vec![value])
    } else {
        Err(Failure::Usage(format!(
            "--{name} is required (flag or config election section)"
        )))
    }
}

pub fn pc_solve(ctx: &Ctx, args: &PcSolveArgs) -> CmdResult {
    let section = ctx.config.election.unwrap_or_default();
    let p_bs = grid_axis(&args.p_b, section.p_b, "pb")?;
    let deltas = grid_axis(&args.delta, section.delta, "delta")?;
    let ns = grid_axis(&args.n, section.n, "n")?;
    let alphas = grid_axis(&args.alpha, section.alpha, "alpha")?;

    let mut rows = Vec::new();
    for &p_b in &p_bs {
        for &delta in &deltas {
            for &n in &ns {
                for &alpha in &alphas {
                    let dist = VoteDistribution::new(p_b, delta).map_err(bad_args)?;
                    let a = solve_pc_star(&dist, n, alpha).map_err(bad_args)?;
                    rows.push(PcRow {
                        p_b,
                        delta,
                        n,
                        alpha,
                        p_c_star: a.p_c_star,
                        ballots_required: a.ballots_required,
                        k0: a.k0,
                        k1: a.k1,
                        k2: a.k2,
                        z_value: a.z_value,
                        feasible: a.feasible,
                    });
                }
            }
        }
    }

    for row in &rows {
        match row.p_c_star {
            Some(pc) => println!(
                "p_b={} delta={} n={} alpha={} -> p_c_star={:.6} ballots={}",
                row.p_b,
                row.delta,
                row.n,
                row.alpha,
                pc,
                row.ballots_required.unwrap_or(0),
            ),
            None => println!(
                "p_b={} delta={} n={} alpha={} -> infeasible (no fraction in [0, 1] flips this election)",
                row.p_b, row.delta, row.n, row.alpha,
            ),
        }
    }

    if ctx.out_flag.is_some() {
        let dir = ctx.stage_dir("pc_solve");
        start_stage(&dir)?;
        super::write_csv_rows(&dir.join("pc_solve.csv"), &rows)?;
        let json = serde_json::to_string_pretty(&rows)
            .map_err(|e| Failure::Internal(e.to_string()))?;
        write_new(&dir.join("pc_solve.json"), json.as_bytes())
            .map_err(super::write_output)?;
        // The closed form consumes no randomness; record 0 so manifests
        // stay uniform.
        finish_stage(&dir, ctx.manifest("pc-solve", 0))?;
    }

    let infeasible = rows.iter().filter(|r| !r.feasible).count();
    if infeasible > 0 {
        return Err(Failure::Infeasible(format!(
            "{infeasible} of {} grid points infeasible",
            rows.len()
        )));
    }
    Ok(())
}

/// Everything `validate` reports, persisted when `--out` is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ValidateReport {
    p_b: f64,
    delta: f64,
    n: u64,
    alpha: f64,
    trials: u64,
    seed: u64,
    p_c_star: Option<f64>,
    /// The fraction actually simulated (a `--pc` override or p_c*).
    p_c_used: f64,
    success_rate: f64,
    ci_halfwidth: f64,
    target_rate: f64,
    pass: bool,
}

pub fn validate(ctx: &Ctx, args: &ValidateArgs) -> CmdResult {
    let section = ctx.config.election.unwrap_or_default();
    let p_b = args.p_b.or(section.p_b).unwrap_or(DEMO_P_B);
    let delta = args.delta.or(section.delta).unwrap_or(DEMO_DELTA);
    let n = args.n.or(section.n).unwrap_or(DEMO_N);
    let alpha = args.alpha.or(section.alpha).unwrap_or(DEMO_ALPHA);
    let trials = args.trials.or(section.trials).unwrap_or(DEMO_TRIALS);
    let seed = ctx.seed(section.seed, 0);

    let dist = VoteDistribution::new(p_b, delta).map_err(bad_args)?;
    let assessment = solve_pc_star(&dist, n, alpha).map_err(bad_args)?;

    let p_c_used = match args.p_c.or(section.pc) {
        Some(forced) => forced,
        None => assessment.p_c_star.ok_or_else(|| {
            Failure::Infeasible(format!(
                "no compromising fraction in [0, 1] flips p_b={p_b} delta={delta} \
                 n={n} at alpha={alpha}; nothing to validate (use --pc to force one)"
            ))
        })?,
    };

    let (rate, ci_halfwidth) = monte_carlo_success(&dist, p_c_used, n, trials, seed)
        .map_err(bad_args)?;
    let target_rate = 1.0 - alpha;
    let pass = (rate - target_rate).abs() <= 3.0 * ci_halfwidth;

    match assessment.p_c_star {
        Some(pc) => println!("closed-form p_c_star = {pc:.6}"),
        None => println!("closed-form p_c_star = infeasible"),
    }
    println!("simulated p_c = {p_c_used:.6} over {trials} trials (seed {seed})");
    println!("empirical success rate = {rate:.6} +/- {ci_halfwidth:.6} (95% CI)");
    println!("target rate (1 - alpha) = {target_rate:.6}");
    println!(
        "gate |rate - target| <= 3 * ci: {}",
        if pass { "pass" } else { "FAIL" }
    );

    if ctx.out_flag.is_some() {
        let dir = ctx.stage_dir("validate");
        start_stage(&dir)?;
        let report = ValidateReport {
            p_b,
            delta,
            n,
            alpha,
            trials,
            seed,
            p_c_star: assessment.p_c_star,
            p_c_used,
            success_rate: rate,
            ci_halfwidth,
            target_rate,
            pass,
        };
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Failure::Internal(e.to_string()))?;
        write_new(&dir.join("validate.json"), json.as_bytes())
            .map_err(super::write_output)?;
        finish_stage(&dir, ctx.manifest("validate", seed))?;
    }

    if pass {
        Ok(())
    } else {
        Err(Failure::Infeasible(format!(
            "empirical rate {rate:.6} differs from target {target_rate:.6} \
             by more than 3 * {ci_halfwidth:.6}"
        )))
    }
}
