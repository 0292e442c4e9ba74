//! Projected-gradient attacks on bubble classifiers.
//!
//! The attack surface is a perturbation `delta` added to a clean image,
//! constrained to one of six budget sets (see [`project`]) and to the
//! image box `[0, 1]`. [`pgd_attack`] runs iterated gradient ascent on a
//! classification loss with projection after every step, optional random
//! starts and restarts, and an adaptive step-size schedule that halves
//! the step when the best loss stops improving (checkpoint spacing
//! starts at ~22% of the step budget and shrinks geometrically, in the
//! style of budget-aware PGD variants).
//!
//! Mark-direction semantics: an *over* attack turns a non-mark into a
//! predicted mark (overvote); an *under* attack erases a mark
//! (undervote). The direction gates which examples are eligible —
//! the ascent itself is always untargeted (push the true label's logit
//! down), and examples the model already misclassifies are excluded.

pub mod project;
pub mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{LossKind, Model};
use crate::error::Error;
use crate::image::{BubbleImage, Label, Raster};
use crate::rng::{Purpose, Stream};
use crate::{Result, PIXELS};

pub use sweep::{
    attack_sweep, attack_sweep_detailed, read_sweep_csv, write_sweep_csv, SweepOutcome, SweepRow,
};

/// Which constraint family a perturbation budget belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Linf,
    L2,
    L1,
    L0,
    L0Linf,
    L0Sigma,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Linf,
        AttackKind::L2,
        AttackKind::L1,
        AttackKind::L0,
        AttackKind::L0Linf,
        AttackKind::L0Sigma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Linf => "linf",
            AttackKind::L2 => "l2",
            AttackKind::L1 => "l1",
            AttackKind::L0 => "l0",
            AttackKind::L0Linf => "l0_linf",
            AttackKind::L0Sigma => "l0_sigma",
        }
    }

    pub fn parse(name: &str) -> Result<AttackKind> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == name)
            .ok_or_else(|| Error::invalid(format!("unknown attack kind `{name}`")))
    }
}

/// A fully specified perturbation budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormConstraint {
    Linf { epsilon: f64 },
    L2 { epsilon: f64 },
    L1 { epsilon: f64 },
    L0 { k: usize },
    L0Linf { k: usize, epsilon: f64 },
    L0Sigma { k: usize, kappa: f64 },
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::invalid(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

impl NormConstraint {
    pub fn linf(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(NormConstraint::Linf { epsilon })
    }

    pub fn l2(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(NormConstraint::L2 { epsilon })
    }

    pub fn l1(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(NormConstraint::L1 { epsilon })
    }

    pub fn l0(k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(NormConstraint::L0 { k })
    }

    pub fn l0_linf(k: usize, epsilon: f64) -> Result<Self> {
        check_k(k)?;
        check_epsilon(epsilon)?;
        Ok(NormConstraint::L0Linf { k, epsilon })
    }

    pub fn l0_sigma(k: usize, kappa: f64) -> Result<Self> {
        check_k(k)?;
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::invalid(format!(
                "kappa must be finite and nonnegative, got {kappa}"
            )));
        }
        Ok(NormConstraint::L0Sigma { k, kappa })
    }

    pub fn kind(&self) -> AttackKind {
        match self {
            NormConstraint::Linf { .. } => AttackKind::Linf,
            NormConstraint::L2 { .. } => AttackKind::L2,
            NormConstraint::L1 { .. } => AttackKind::L1,
            NormConstraint::L0 { .. } => AttackKind::L0,
            NormConstraint::L0Linf { .. } => AttackKind::L0Linf,
            NormConstraint::L0Sigma { .. } => AttackKind::L0Sigma,
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            NormConstraint::Linf { epsilon }
            | NormConstraint::L2 { epsilon }
            | NormConstraint::L1 { epsilon }
            | NormConstraint::L0Linf { epsilon, .. } => Some(epsilon),
            _ => None,
        }
    }

    pub fn k(&self) -> Option<usize> {
        match *self {
            NormConstraint::L0 { k }
            | NormConstraint::L0Linf { k, .. }
            | NormConstraint::L0Sigma { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn kappa(&self) -> Option<f64> {
        match *self {
            NormConstraint::L0Sigma { kappa, .. } => Some(kappa),
            _ => None,
        }
    }

    /// The scalar that grows along a sweep of this constraint family.
    pub fn budget(&self) -> f64 {
        match *self {
            NormConstraint::Linf { epsilon }
            | NormConstraint::L2 { epsilon }
            | NormConstraint::L1 { epsilon }
            | NormConstraint::L0Linf { epsilon, .. } => epsilon,
            NormConstraint::L0 { k } | NormConstraint::L0Sigma { k, .. } => k as f64,
        }
    }

    /// Project `delta` onto this budget set (for sigma budgets the set
    /// depends on the clean image).
    pub fn project(&self, delta: &mut [f64], clean: &Raster) {
        match *self {
            NormConstraint::Linf { epsilon } => project::project_linf(delta, epsilon),
            NormConstraint::L2 { epsilon } => project::project_l2(delta, epsilon),
            NormConstraint::L1 { epsilon } => project::project_l1(delta, epsilon),
            NormConstraint::L0 { k } => project::project_l0_topk(delta, k),
            NormConstraint::L0Linf { k, epsilon } => {
                project::project_l0_linf(delta, k, epsilon)
            }
            NormConstraint::L0Sigma { k, kappa } => {
                project::project_l0_sigma(delta, clean, k, kappa)
            }
        }
    }

    /// Whether `delta` lies in the budget set, up to `tol` on the
    /// continuous norms.
    pub fn satisfied(&self, delta: &[f64], clean: &Raster, tol: f64) -> bool {
        let nonzero = || delta.iter().filter(|&&d| d != 0.0).count();
        match *self {
            NormConstraint::Linf { epsilon } => {
                delta.iter().all(|d| d.abs() <= epsilon + tol)
            }
            NormConstraint::L2 { epsilon } => {
                delta.iter().map(|d| d * d).sum::<f64>().sqrt() <= epsilon + tol
            }
            NormConstraint::L1 { epsilon } => {
                delta.iter().map(|d| d.abs()).sum::<f64>() <= epsilon + tol
            }
            NormConstraint::L0 { k } => nonzero() <= k,
            NormConstraint::L0Linf { k, epsilon } => {
                nonzero() <= k && delta.iter().all(|d| d.abs() <= epsilon + tol)
            }
            NormConstraint::L0Sigma { k, kappa } => {
                let sigma = project::sigma_map(clean);
                nonzero() <= k
                    && delta
                        .iter()
                        .zip(&sigma)
                        .all(|(d, s)| d.abs() <= kappa * s + tol)
            }
        }
    }

    /// A random point in (approximately the interior of) the budget set,
    /// used for random starts. The result is projected afterwards, so it
    /// only has to be a reasonable proposal:
    /// componentwise-uniform for l-inf, uniform-in-ball via direction and
    /// radius^(1/n) for l2 (approximated the same way for l1), and k
    /// uniformly chosen coordinates at uniform magnitudes for the sparse
    /// kinds.
    fn random_start(&self, rng: &mut Stream, clean: &Raster) -> Vec<f64> {
        let n = PIXELS;
        match *self {
            NormConstraint::Linf { epsilon } => {
                (0..n).map(|_| rng.uniform_in(-epsilon, epsilon)).collect()
            }
            NormConstraint::L2 { epsilon } => {
                let g: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = epsilon * rng.uniform().powf(1.0 / n as f64);
                if norm == 0.0 {
                    vec![0.0; n]
                } else {
                    g.into_iter().map(|v| v * radius / norm).collect()
                }
            }
            NormConstraint::L1 { epsilon } => {
                let g: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
                let norm = g.iter().map(|v| v.abs()).sum::<f64>();
                let radius = epsilon * rng.uniform().powf(1.0 / n as f64);
                if norm == 0.0 {
                    vec![0.0; n]
                } else {
                    g.into_iter().map(|v| v * radius / norm).collect()
                }
            }
            NormConstraint::L0 { k } => sparse_start(rng, n, k, |_| 1.0),
            NormConstraint::L0Linf { k, epsilon } => sparse_start(rng, n, k, |_| epsilon),
            NormConstraint::L0Sigma { k, kappa } => {
                let sigma = project::sigma_map(clean);
                sparse_start(rng, n, k, |i| kappa * sigma[i])
            }
        }
    }
}

fn sparse_start(rng: &mut Stream, n: usize, k: usize, bound: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut delta = vec![0.0; n];
    for i in rng.choose_k(n, k.min(n)) {
        let b = bound(i);
        delta[i] = rng.uniform_in(-b, b);
    }
    delta
}

/// Which class of clean examples an attack run targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Add marks: attack non-marks so they read as marks.
    Over,
    /// Erase marks: attack marks so they read as non-marks.
    Under,
    /// Attack every correctly classified example.
    Both,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Over => "over",
            Direction::Under => "under",
            Direction::Both => "both",
        }
    }

    fn admits(self, label: Label) -> bool {
        match self {
            Direction::Over => label == Label::NonMark,
            Direction::Under => label == Label::Mark,
            Direction::Both => true,
        }
    }
}

/// Everything that determines one attack run. Deserializes from a flat
/// JSON object; fields after `kappa` have defaults so configs only need
/// the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Initial ascent step; `None` picks a kind-appropriate default
    /// (a quarter of the budget radius for the norm balls, 0.25 pixel
    /// units for the sparse kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size_init: Option<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_true")]
    pub random_start: bool,
    #[serde(default = "default_true")]
    pub adaptive_halving: bool,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    75
}
fn default_restarts() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_loss() -> LossKind {
    LossKind::Ce
}
fn default_direction() -> Direction {
    Direction::Both
}

impl AttackConfig {
    /// A ready-to-run config for one budget with all knobs at defaults.
    pub fn for_constraint(constraint: NormConstraint) -> AttackConfig {
        AttackConfig {
            kind: constraint.kind(),
            epsilon: constraint.epsilon(),
            k: constraint.k(),
            kappa: constraint.kappa(),
            steps: default_steps(),
            step_size_init: None,
            restarts: default_restarts(),
            random_start: true,
            adaptive_halving: true,
            loss: default_loss(),
            direction: default_direction(),
            seed: 0,
        }
    }

    /// Check invariants and assemble the budget from the flat fields.
    /// Budget fields that the kind does not use must be absent.
    pub fn validate(&self) -> Result<NormConstraint> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        if let Some(s) = self.step_size_init {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid(format!(
                    "step_size_init must be positive and finite, got {s}"
                )));
            }
        }
        let need = |field: Option<f64>, name: &str| {
            field.ok_or_else(|| {
                Error::invalid(format!(
                    "attack kind `{}` requires `{name}`",
                    self.kind.as_str()
                ))
            })
        };
        let need_k = || {
            self.k.ok_or_else(|| {
                Error::invalid(format!("attack kind `{}` requires `k`", self.kind.as_str()))
            })
        };
        let reject = |present: bool, name: &str| {
            if present {
                Err(Error::invalid(format!(
                    "attack kind `{}` does not use `{name}`",
                    self.kind.as_str()
                )))
            } else {
                Ok(())
            }
        };
        match self.kind {
            AttackKind::Linf | AttackKind::L2 | AttackKind::L1 => {
                reject(self.k.is_some(), "k")?;
                reject(self.kappa.is_some(), "kappa")?;
            }
            AttackKind::L0 => {
                reject(self.epsilon.is_some(), "epsilon")?;
                reject(self.kappa.is_some(), "kappa")?;
            }
            AttackKind::L0Linf => reject(self.kappa.is_some(), "kappa")?,
            AttackKind::L0Sigma => reject(self.epsilon.is_some(), "epsilon")?,
        }
        match self.kind {
            AttackKind::Linf => NormConstraint::linf(need(self.epsilon, "epsilon")?),
            AttackKind::L2 => NormConstraint::l2(need(self.epsilon, "epsilon")?),
            AttackKind::L1 => NormConstraint::l1(need(self.epsilon, "epsilon")?),
            AttackKind::L0 => NormConstraint::l0(need_k()?),
            AttackKind::L0Linf => {
                NormConstraint::l0_linf(need_k()?, need(self.epsilon, "epsilon")?)
            }
            AttackKind::L0Sigma => {
                NormConstraint::l0_sigma(need_k()?, need(self.kappa, "kappa")?)
            }
        }
    }

    fn step_size(&self, constraint: &NormConstraint) -> f64 {
        self.step_size_init.unwrap_or(match *constraint {
            NormConstraint::Linf { epsilon }
            | NormConstraint::L2 { epsilon }
            | NormConstraint::L1 { epsilon } => (epsilon / 4.0).max(f64::MIN_POSITIVE),
            NormConstraint::L0 { .. }
            | NormConstraint::L0Linf { .. }
            | NormConstraint::L0Sigma { .. } => 0.25,
        })
    }
}

/// The outcome of attacking a single image.
#[derive(Debug, Clone)]
pub struct AdvExample {
    /// The perturbed image; always inside `[0, 1]` and the budget set.
    pub x_adv: Raster,
    /// Whether the model misclassifies `x_adv`.
    pub success: bool,
    /// Attack loss at `x_adv`.
    pub final_loss: f64,
    /// Gradient steps taken in the restart that produced `x_adv`.
    pub steps_used: usize,
    /// Which restart produced `x_adv`.
    pub restart_index: usize,
}

/// Loss value that certifies misclassification: cross-entropy above
/// ln 2 (true-class probability below one half) or a positive
/// difference-of-logits, both strict.
fn success_threshold(loss: LossKind) -> f64 {
    match loss {
        LossKind::Ce => std::f64::consts::LN_2,
        LossKind::Dlr => 0.0,
    }
}

/// Pull `x + delta` back inside the image box by shrinking `delta`
/// componentwise. Each component keeps its sign and loses magnitude, so
/// every budget set in this module is preserved.
fn box_clip(delta: &mut [f64], clean: &Raster) {
    for (d, &x) in delta.iter_mut().zip(clean.data()) {
        *d = (x + *d).clamp(0.0, 1.0) - x;
    }
}

fn compose(workspace: &mut Raster, clean: &Raster, delta: &[f64]) {
    for ((w, &x), &d) in workspace
        .data_mut()
        .iter_mut()
        .zip(clean.data())
        .zip(delta)
    {
        // Clipped deltas keep x + d inside [0, 1] mathematically; the
        // clamp removes any trailing rounding residue.
        *w = (x + d).clamp(0.0, 1.0);
    }
}

/// Steps at which the adaptive schedule reconsiders the step size: the
/// first after ~22% of the budget, then geometrically shrinking gaps
/// (capped below at 3) until the budget is exhausted.
fn halving_checkpoints(steps: usize) -> Vec<usize> {
    let mut checkpoints = Vec::new();
    let mut interval = ((0.22 * steps as f64).ceil() as usize).max(1);
    let mut next = interval;
    while next < steps {
        checkpoints.push(next);
        interval = ((interval as f64 * 0.75).floor() as usize).max(3);
        next += interval;
    }
    checkpoints
}

fn ascent_direction(kind: AttackKind, grad: &[f64]) -> Vec<f64> {
    match kind {
        // Sign steps for the box-like and sparse budgets.
        AttackKind::Linf | AttackKind::L0 | AttackKind::L0Linf | AttackKind::L0Sigma => grad
            .iter()
            .map(|&g| {
                if g > 0.0 {
                    1.0
                } else if g < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        // Normalized-gradient steps for the smooth balls.
        AttackKind::L2 | AttackKind::L1 => {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 {
                vec![0.0; grad.len()]
            } else {
                grad.iter().map(|g| g / norm).collect()
            }
        }
    }
}

struct RestartOutcome {
    best_loss: f64,
    best_delta: Vec<f64>,
    steps_used: usize,
    flipped: bool,
}

fn run_restart(
    model: &Model,
    clean: &Raster,
    label: Label,
    cfg: &AttackConfig,
    constraint: &NormConstraint,
    rng: &mut Stream,
    restart: usize,
) -> RestartOutcome {
    // Restart 0 honors `random_start`; later restarts are always
    // randomized (a second deterministic run would repeat the first).
    let mut delta = if cfg.random_start || restart > 0 {
        constraint.random_start(rng, clean)
    } else {
        vec![0.0; PIXELS]
    };
    constraint.project(&mut delta, clean);
    box_clip(&mut delta, clean);

    let threshold = success_threshold(cfg.loss);
    let checkpoints = if cfg.adaptive_halving {
        halving_checkpoints(cfg.steps)
    } else {
        Vec::new()
    };
    let mut next_checkpoint = 0;
    let mut eta = cfg.step_size(constraint);
    let mut best_loss = f64::NEG_INFINITY;
    let mut best_delta = delta.clone();
    let mut best_at_last_checkpoint = f64::NEG_INFINITY;
    let mut workspace = clean.clone();

    for step in 0..=cfg.steps {
        // When the best loss has stagnated since the previous
        // checkpoint, halve the step and resume from the best iterate.
        if next_checkpoint < checkpoints.len() && step == checkpoints[next_checkpoint] {
            if best_loss <= best_at_last_checkpoint + 1e-12 {
                eta *= 0.5;
                delta.copy_from_slice(&best_delta);
            }
            best_at_last_checkpoint = best_loss;
            next_checkpoint += 1;
        }

        compose(&mut workspace, clean, &delta);
        let (loss, grad) = model.loss_and_grad_input(&workspace, label, cfg.loss);
        if loss > best_loss {
            best_loss = loss;
            best_delta.copy_from_slice(&delta);
        }
        if loss > threshold {
            // This iterate already flips the prediction; stop here.
            return RestartOutcome {
                best_loss,
                best_delta,
                steps_used: step,
                flipped: true,
            };
        }
        if step == cfg.steps {
            break;
        }

        let direction = ascent_direction(cfg.kind, grad.data());
        for (d, dir) in delta.iter_mut().zip(&direction) {
            *d += eta * dir;
        }
        constraint.project(&mut delta, clean);
        box_clip(&mut delta, clean);
    }

    RestartOutcome {
        best_loss,
        best_delta,
        steps_used: cfg.steps,
        flipped: false,
    }
}

/// Attack one image, using its position in the dataset to key the
/// random stream so results do not depend on how many neighbors were
/// attacked in the same run.
pub fn pgd_attack_indexed(
    model: &Model,
    image: &BubbleImage,
    cfg: &AttackConfig,
    item: u64,
) -> Result<AdvExample> {
    let constraint = cfg.validate()?;
    let clean = &image.pixels;
    let label = image.label;
    let mut rng = Stream::for_item(cfg.seed, Purpose::Attack, item);

    let mut best: Option<(RestartOutcome, usize)> = None;
    for restart in 0..cfg.restarts {
        let outcome = run_restart(model, clean, label, cfg, &constraint, &mut rng, restart);
        let flipped = outcome.flipped;
        if best
            .as_ref()
            .is_none_or(|(b, _)| outcome.best_loss > b.best_loss)
        {
            best = Some((outcome, restart));
        }
        if flipped {
            break;
        }
    }
    let (outcome, restart_index) = best.expect("restarts >= 1");

    // Safety net: the loop maintains feasibility as an invariant, so
    // this final projection is a no-op. Run it anyway and recompute the
    // reported loss and verdict from the exact returned image.
    let mut delta = outcome.best_delta;
    constraint.project(&mut delta, clean);
    box_clip(&mut delta, clean);
    let mut x_adv = clean.clone();
    compose(&mut x_adv, clean, &delta);
    debug_assert!(constraint.satisfied(delta_of(&x_adv, clean).as_slice(), clean, 1e-9));

    let success = model.predict(&x_adv) != label;
    let final_loss = model.loss(&x_adv, label, cfg.loss);
    Ok(AdvExample {
        x_adv,
        success,
        final_loss,
        steps_used: outcome.steps_used,
        restart_index,
    })
}

fn delta_of(x_adv: &Raster, clean: &Raster) -> Vec<f64> {
    x_adv
        .data()
        .iter()
        .zip(clean.data())
        .map(|(a, c)| a - c)
        .collect()
}

/// Attack a single image in isolation (stream item 0).
pub fn pgd_attack(model: &Model, image: &BubbleImage, cfg: &AttackConfig) -> Result<AdvExample> {
    pgd_attack_indexed(model, image, cfg, 0)
}

/// Indices of examples the attack direction admits and the model gets
/// right on clean inputs — already-misclassified examples would inflate
/// attack statistics without any perturbation doing work.
pub fn eligible_indices(model: &Model, data: &[BubbleImage], direction: Direction) -> Vec<usize> {
    data.iter()
        .enumerate()
        .filter(|(_, img)| direction.admits(img.label) && model.predict(&img.pixels) == img.label)
        .map(|(i, _)| i)
        .collect()
}

/// Attack the given dataset rows in parallel. Returns one result per
/// index, in the order given. Determinism does not depend on thread
/// scheduling because each row derives its stream from its own index.
pub fn attack_indices(
    model: &Model,
    data: &[BubbleImage],
    cfg: &AttackConfig,
    indices: &[usize],
) -> Result<Vec<(usize, AdvExample)>> {
    cfg.validate()?;
    indices
        .par_iter()
        .map(|&i| Ok((i, pgd_attack_indexed(model, &data[i], cfg, i as u64)?)))
        .collect()
}

/// Attack every eligible example of a dataset.
pub fn attack_dataset(
    model: &Model,
    data: &[BubbleImage],
    cfg: &AttackConfig,
) -> Result<Vec<(usize, AdvExample)>> {
    let eligible = eligible_indices(model, data, cfg.direction);
    attack_indices(model, data, cfg, &eligible)
}

/// Fraction of eligible examples the attack fails to flip. Errors when
/// no example is eligible.
pub fn robust_accuracy(model: &Model, data: &[BubbleImage], cfg: &AttackConfig) -> Result<f64> {
    let results = attack_dataset(model, data, cfg)?;
    if results.is_empty() {
        return Err(Error::invalid(
            "no eligible examples: dataset is empty, entirely misclassified, \
             or has no examples matching the attack direction",
        ));
    }
    let flips = results.iter().filter(|(_, adv)| adv.success).count();
    Ok(1.0 - flips as f64 / results.len() as f64)
}

/// Six-point budget grid for l-inf sweeps, in pixel units (4/255 up to
/// a full pixel).
pub const BUDGET_GRID_LINF: [f64; 6] = [
    4.0 / 255.0,
    8.0 / 255.0,
    16.0 / 255.0,
    32.0 / 255.0,
    64.0 / 255.0,
    1.0,
];

/// Six-point budget grid for l1 sweeps.
pub const BUDGET_GRID_L1: [f64; 6] = [2.0, 4.0, 8.0, 20.0, 200.0, 2000.0];

/// Six-point budget grid for l2 sweeps.
pub const BUDGET_GRID_L2: [f64; 6] = [1.0, 2.0, 3.0, 5.0, 15.0, 45.0];

/// Six-point sparsity grid for the l0 family.
pub const BUDGET_GRID_L0: [usize; 6] = [1, 10, 20, 200, 500, 2000];

/// Fixed sparsity when sweeping the l-inf budget of the joint
/// l0 + l-inf constraint.
pub const L0_LINF_K: usize = 20;

/// Default local-deviation multiplier for sigma-bounded attacks.
pub const DEFAULT_KAPPA: f64 = 10.0;

/// The six imperceptibility-calibrated budgets, one per kind: l-inf
/// 16/255, l2 2, l1 20, l0 one pixel, l0+l-inf (20, 64/255), and
/// sigma-bounded single-pixel at the given kappa.
pub fn imperceptible_constraints(kappa: f64) -> Result<[NormConstraint; 6]> {
    Ok([
        NormConstraint::linf(16.0 / 255.0)?,
        NormConstraint::l2(2.0)?,
        NormConstraint::l1(20.0)?,
        NormConstraint::l0(1)?,
        NormConstraint::l0_linf(L0_LINF_K, 64.0 / 255.0)?,
        NormConstraint::l0_sigma(1, kappa)?,
    ])
}

/// The full sweep grid: every kind over its budget grid.
pub fn grid_constraints(kappa: f64) -> Result<Vec<NormConstraint>> {
    let mut out = Vec::new();
    for eps in BUDGET_GRID_LINF {
        out.push(NormConstraint::linf(eps)?);
    }
    for eps in BUDGET_GRID_L2 {
        out.push(NormConstraint::l2(eps)?);
    }
    for eps in BUDGET_GRID_L1 {
        out.push(NormConstraint::l1(eps)?);
    }
    for k in BUDGET_GRID_L0 {
        out.push(NormConstraint::l0(k)?);
    }
    for eps in BUDGET_GRID_LINF {
        out.push(NormConstraint::l0_linf(L0_LINF_K, eps)?);
    }
    for k in BUDGET_GRID_L0 {
        out.push(NormConstraint::l0_sigma(k, kappa)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LinearTwoLogit;
    use crate::image::MarkType;

    fn linear_model(seed: u64) -> Model {
        let mut rng = Stream::new(seed, 0);
        let weights: Vec<f64> = (0..PIXELS).map(|_| rng.uniform_in(-0.02, 0.02)).collect();
        Model::Linear(LinearTwoLogit::new(weights, 0.1).unwrap())
    }

    fn image_of(value: f64, mark_type: MarkType) -> BubbleImage {
        BubbleImage::new(Raster::filled(value), mark_type).unwrap()
    }

    fn base_config(kind: AttackKind) -> AttackConfig {
        AttackConfig {
            kind,
            epsilon: None,
            k: None,
            kappa: None,
            steps: 40,
            step_size_init: None,
            restarts: 2,
            random_start: true,
            adaptive_halving: true,
            loss: LossKind::Ce,
            direction: Direction::Both,
            seed: 7,
        }
    }

    /// For a linear two-logit model the l-inf optimum is the signed
    /// epsilon corner of the weight vector; PGD with a step at least
    /// epsilon must land exactly on it.
    #[test]
    fn linf_on_linear_model_reaches_analytic_optimum() {
        for model_seed in [1, 2, 3] {
            let model = linear_model(model_seed);
            for mark_type in [MarkType::Blank, MarkType::Filled] {
                let image = image_of(0.5, mark_type);
                let label = image.label;
                if model.predict(&image.pixels) != label {
                    continue; // exactness statement assumes a correct clean prediction
                }
                let eps = 0.25;
                for loss in [LossKind::Ce, LossKind::Dlr] {
                    let mut cfg = base_config(AttackKind::Linf);
                    cfg.epsilon = Some(eps);
                    cfg.step_size_init = Some(eps);
                    cfg.random_start = false;
                    cfg.restarts = 1;
                    cfg.loss = loss;
                    let adv = pgd_attack(&model, &image, &cfg).unwrap();

                    // Closed form: move each pixel by eps in the
                    // direction that pushes the true class down.
                    let grad = model.grad_input(&image.pixels, label, loss);
                    let corner = Raster::from_vec(
                        image
                            .pixels
                            .data()
                            .iter()
                            .zip(grad.data())
                            .map(|(&x, &g)| x + eps * g.signum())
                            .collect(),
                    )
                    .unwrap();
                    let best = model.loss(&corner, label, loss);
                    assert!(
                        (adv.final_loss - best).abs() <= 1e-9,
                        "loss {:?}: pgd {} vs corner {best}",
                        loss,
                        adv.final_loss
                    );
                }
            }
        }
    }

    #[test]
    fn zero_epsilon_only_succeeds_on_clean_mistakes() {
        let model = linear_model(1);
        let image = image_of(0.5, MarkType::Filled);
        let mut cfg = base_config(AttackKind::Linf);
        cfg.epsilon = Some(0.0);
        let adv = pgd_attack(&model, &image, &cfg).unwrap();
        assert_eq!(adv.x_adv.data(), image.pixels.data());
        assert_eq!(
            adv.success,
            model.predict(&image.pixels) != image.label
        );
    }

    #[test]
    fn full_pixel_budget_always_flips_a_linear_model() {
        // With the whole box available, any linear model with a nonzero
        // weight vector is flippable from mid-gray.
        let model = linear_model(4);
        for mark_type in [MarkType::Blank, MarkType::Filled] {
            let image = image_of(0.5, mark_type);
            if model.predict(&image.pixels) != image.label {
                continue;
            }
            let mut cfg = base_config(AttackKind::Linf);
            cfg.epsilon = Some(1.0);
            let adv = pgd_attack(&model, &image, &cfg).unwrap();
            assert!(adv.success);
            assert!(adv.x_adv.in_unit_range());
        }
    }

    #[test]
    fn results_are_feasible_for_every_kind() {
        let model = linear_model(5);
        let mut rng = Stream::new(11, 0);
        let noisy = Raster::from_vec(
            (0..PIXELS).map(|_| rng.uniform_in(0.2, 0.8)).collect(),
        )
        .unwrap();
        let image = BubbleImage::new(noisy, MarkType::Scribble).unwrap();

        let constraints = [
            NormConstraint::linf(0.05).unwrap(),
            NormConstraint::l2(1.5).unwrap(),
            NormConstraint::l1(10.0).unwrap(),
            NormConstraint::l0(25).unwrap(),
            NormConstraint::l0_linf(25, 0.25).unwrap(),
            NormConstraint::l0_sigma(25, 10.0).unwrap(),
        ];
        for constraint in constraints {
            let mut cfg = AttackConfig::for_constraint(constraint);
            cfg.steps = 30;
            cfg.restarts = 2;
            cfg.seed = 3;
            let adv = pgd_attack(&model, &image, &cfg).unwrap();
            assert!(adv.x_adv.in_unit_range());
            let delta = delta_of(&adv.x_adv, &image.pixels);
            assert!(
                constraint.satisfied(&delta, &image.pixels, 1e-9),
                "infeasible result for {:?}",
                constraint.kind()
            );
        }
    }

    #[test]
    fn attack_is_deterministic_and_seed_sensitive() {
        let model = linear_model(6);
        let image = image_of(0.45, MarkType::Blank);
        let mut cfg = base_config(AttackKind::L2);
        cfg.epsilon = Some(0.4);
        cfg.steps = 25;
        let a = pgd_attack(&model, &image, &cfg).unwrap();
        let b = pgd_attack(&model, &image, &cfg).unwrap();
        assert_eq!(a.x_adv.data(), b.x_adv.data());
        assert_eq!(a.final_loss, b.final_loss);

        cfg.seed = 8;
        let c = pgd_attack(&model, &image, &cfg).unwrap();
        // Same budget, different random starts: the optimum value may
        // agree but the trajectory should differ for a weak budget.
        assert!(a.x_adv.data() != c.x_adv.data() || a.final_loss == c.final_loss);
    }

    #[test]
    fn eligibility_respects_direction_and_clean_errors() {
        let model = linear_model(1);
        let images = vec![
            image_of(0.5, MarkType::Blank),
            image_of(0.5, MarkType::Filled),
            image_of(0.45, MarkType::Blank),
        ];
        let over = eligible_indices(&model, &images, Direction::Over);
        let under = eligible_indices(&model, &images, Direction::Under);
        let both = eligible_indices(&model, &images, Direction::Both);
        for &i in &over {
            assert_eq!(images[i].label, Label::NonMark);
        }
        for &i in &under {
            assert_eq!(images[i].label, Label::Mark);
        }
        assert_eq!(both.len(), over.len() + under.len());
        for &i in &both {
            assert_eq!(model.predict(&images[i].pixels), images[i].label);
        }
    }

    #[test]
    fn robust_accuracy_extremes() {
        let model = linear_model(2);
        let images: Vec<BubbleImage> = (0..6)
            .map(|i| {
                let mt = if i % 2 == 0 {
                    MarkType::Blank
                } else {
                    MarkType::Filled
                };
                image_of(0.4 + 0.03 * i as f64, mt)
            })
            .filter(|img| model.predict(&img.pixels) == img.label)
            .collect();
        assert!(!images.is_empty());

        let mut cfg = base_config(AttackKind::Linf);
        cfg.epsilon = Some(1.0);
        assert_eq!(robust_accuracy(&model, &images, &cfg).unwrap(), 0.0);

        cfg.epsilon = Some(0.0);
        assert_eq!(robust_accuracy(&model, &images, &cfg).unwrap(), 1.0);

        assert!(robust_accuracy(&model, &[], &cfg).is_err());
    }

    #[test]
    fn halving_checkpoints_shrink_geometrically() {
        let cps = halving_checkpoints(75);
        assert_eq!(cps.first(), Some(&17)); // ceil(0.22 * 75)
        for w in cps.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] <= 17);
        }
        assert!(cps.iter().all(|&c| c < 75));
        assert!(halving_checkpoints(1).is_empty());
    }

    #[test]
    fn config_validation_rejects_mismatched_fields() {
        let mut cfg = base_config(AttackKind::Linf);
        assert!(cfg.validate().is_err()); // missing epsilon
        cfg.epsilon = Some(0.1);
        assert!(cfg.validate().is_ok());
        cfg.k = Some(5);
        assert!(cfg.validate().is_err()); // linf does not take k

        let mut cfg = base_config(AttackKind::L0Sigma);
        cfg.k = Some(5);
        assert!(cfg.validate().is_err()); // missing kappa
        cfg.kappa = Some(10.0);
        assert!(cfg.validate().is_ok());
        cfg.steps = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let parsed: AttackConfig =
            serde_json::from_str(r#"{"kind": "l0_linf", "k": 20, "epsilon": 0.25}"#).unwrap();
        assert_eq!(parsed.kind, AttackKind::L0Linf);
        assert_eq!(parsed.steps, 75);
        assert_eq!(parsed.restarts, 5);
        assert!(parsed.random_start);
        assert_eq!(parsed.loss, LossKind::Ce);
        assert_eq!(parsed.direction, Direction::Both);
        assert!(parsed.validate().is_ok());

        let text = serde_json::to_string(&parsed).unwrap();
        let again: AttackConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, again);

        assert!(serde_json::from_str::<AttackConfig>(
            r#"{"kind": "linf", "epsilon": 0.1, "budget": 3}"#
        )
        .is_err());
    }

    #[test]
    fn grid_helpers_are_well_formed() {
        let grid = grid_constraints(DEFAULT_KAPPA).unwrap();
        assert_eq!(grid.len(), 36);
        for c in &grid {
            assert!(c.budget() > 0.0);
        }
        let imp = imperceptible_constraints(DEFAULT_KAPPA).unwrap();
        let kinds: Vec<AttackKind> = imp.iter().map(|c| c.kind()).collect();
        assert_eq!(kinds.as_slice(), AttackKind::ALL.as_slice());
    }
}
