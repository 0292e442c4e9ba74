//! Core library for studying how few compromised mark-sense ballots an
//! attacker needs to flip a two-candidate election, and whether the pixel
//! perturbations that confuse a bubble classifier survive a print-scan
//! channel.
//!
//! The pieces fit together as a pipeline:
//!
//! * [`election`] — closed-form solver for the minimum compromised-ballot
//!   fraction that flips an election at a given confidence level, plus a
//!   per-ballot Monte Carlo simulator that validates the closed form.
//! * [`synth`] — deterministic generator for small grayscale bubble images
//!   (blank, filled, and assorted stray-mark styles) with PGM persistence
//!   and CSV manifests.
//! * [`classifier`] — a linear two-logit model and a small MLP trained by
//!   plain momentum SGD, with exact input/parameter gradients and a
//!   versioned binary container format.
//! * [`attack`] — projected gradient ascent under six lp-norm budgets
//!   (l-inf, l2, l1, l0, l0+l-inf, l0+sigma-map), sweep orchestration with
//!   success carry-forward across budgets, and robust-accuracy accounting.
//! * [`channel`] — a parametric print-scan degradation model (dot gain,
//!   blur, jitter, gamma, contrast, noise, quantization), reference-patch
//!   calibration, and digital-vs-physical fidelity metrics (RMSE, KL, SSIM).
//!
//! Everything is deterministic given a seed: random streams are split by
//! purpose and item index (see [`rng`]), parallel loops collect in index
//! order, and serialized artifacts carry no timestamps.

pub mod attack;
pub mod channel;
pub mod classifier;
pub mod election;
pub mod error;
pub mod image;
pub mod rng;
pub mod synth;

pub use error::Error;
pub use image::{BubbleImage, Label, MarkType, Raster, HEIGHT, PIXELS, WIDTH};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
