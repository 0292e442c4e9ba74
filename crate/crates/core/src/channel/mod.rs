//! Parametric print-and-scan simulation.
//!
//! An adversarial ballot does not reach the scanner as the attacker
//! composed it: toner spreads, the page lands slightly off-grid, the
//! scanner applies its own tone curve and sensor noise, and everything
//! is re-quantized. [`apply_channel`] models that as a fixed stage
//! pipeline, [`calibrate_contrast`] plays the role of the tonal
//! calibration bar printed alongside the bubbles, and
//! [`physical_robust_accuracy`] / [`perturbation_fidelity`] measure how
//! much of a digital attack survives the trip.
//!
//! Everything here is deterministic per (image, config, seed): each
//! image keys its own random substream, clean originals on the even
//! slot and adversarial artifacts on the odd one, so results do not
//! depend on batch composition or thread scheduling.

pub mod metrics;

pub use metrics::{kl_divergence_hist, rmse, ssim, PerturbationMetrics, DEFAULT_KL_BINS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::AdvExample;
use crate::classifier::Model;
use crate::rng::{Purpose, Stream};
use crate::{BubbleImage, Error, Raster, Result, HEIGHT, WIDTH};

/// Printed level of the dark calibration patch.
pub const DARK_REF: f64 = 0.05;
/// Printed level of the light calibration patch.
pub const LIGHT_REF: f64 = 0.95;

/// Degradation parameters for one pass through print and scan.
///
/// A stage whose parameter sits at its identity value (zero blur, unit
/// gamma, and so on) is skipped outright, so it neither perturbs the
/// pixels with round-off nor consumes random draws. Clipping to [0, 1]
/// and quantization always run: whatever comes off the scanner is a
/// bounded, discrete image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Gaussian blur radius in pixels (toner spread + scanner optics);
    /// 0 to 8.
    pub blur_sigma: f64,
    /// Additive Gaussian sensor noise, in intensity units; 0 to 4.
    pub noise_std: f64,
    /// Scanner tone-curve exponent; 0.1 to 10, 1 = linear.
    pub gamma: f64,
    /// Linear tonal gain; -10 to 10, 1 = neutral.
    pub contrast_scale: f64,
    /// Linear tonal bias; -10 to 10, 0 = neutral.
    pub contrast_offset: f64,
    /// Maximum sub-pixel misregistration per axis, in pixels; 0 to 4.
    pub jitter_max: f64,
    /// Output quantization levels; at least 2, 256 = 8-bit scan.
    pub quant_levels: u32,
    /// Fraction of local ink that bleeds into each pixel (toner dot
    /// gain); 0 to 1.
    pub dot_gain: f64,
    /// Seed for the per-image noise and jitter substreams.
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::identity()
    }
}

impl ChannelConfig {
    /// Names accepted by [`ChannelConfig::preset`].
    pub const PRESET_NAMES: [&'static str; 3] = ["identity", "laser+scan", "harsh"];

    /// The transparent channel: clip and 8-bit quantization only.
    pub fn identity() -> Self {
        ChannelConfig {
            blur_sigma: 0.0,
            noise_std: 0.0,
            gamma: 1.0,
            contrast_scale: 1.0,
            contrast_offset: 0.0,
            jitter_max: 0.0,
            quant_levels: 256,
            dot_gain: 0.0,
            seed: 0,
        }
    }

    /// A desk laser printer followed by a flatbed scan: mild blur,
    /// faint sensor noise, a gentle tone curve, sub-pixel registration
    /// error, and a little dot gain.
    pub fn laser_scan() -> Self {
        ChannelConfig {
            blur_sigma: 0.6,
            noise_std: 0.02,
            gamma: 1.1,
            jitter_max: 0.4,
            dot_gain: 0.05,
            ..ChannelConfig::identity()
        }
    }

    /// A worn drum and a cheap scanner: everything in
    /// [`ChannelConfig::laser_scan`] turned up, plus a tonal squeeze
    /// and coarse 5-bit quantization.
    pub fn harsh() -> Self {
        ChannelConfig {
            blur_sigma: 1.4,
            noise_std: 0.10,
            gamma: 1.3,
            contrast_scale: 0.85,
            contrast_offset: 0.06,
            jitter_max: 1.2,
            quant_levels: 32,
            dot_gain: 0.15,
            ..ChannelConfig::identity()
        }
    }

    /// Look up a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(ChannelConfig::identity()),
            "laser+scan" => Ok(ChannelConfig::laser_scan()),
            "harsh" => Ok(ChannelConfig::harsh()),
            other => Err(Error::invalid(format!(
                "unknown channel preset {other:?}; expected one of {:?}",
                ChannelConfig::PRESET_NAMES
            ))),
        }
    }

    /// Same channel, different random substreams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Check every parameter against its documented range.
    pub fn validate(&self) -> Result<()> {
        in_range("blur_sigma", self.blur_sigma, 0.0, 8.0)?;
        in_range("noise_std", self.noise_std, 0.0, 4.0)?;
        in_range("gamma", self.gamma, 0.1, 10.0)?;
        in_range("contrast_scale", self.contrast_scale, -10.0, 10.0)?;
        in_range("contrast_offset", self.contrast_offset, -10.0, 10.0)?;
        in_range("jitter_max", self.jitter_max, 0.0, 4.0)?;
        in_range("dot_gain", self.dot_gain, 0.0, 1.0)?;
        if self.quant_levels < 2 {
            return Err(Error::invalid(format!(
                "quant_levels must be at least 2, got {}",
                self.quant_levels
            )));
        }
        Ok(())
    }
}

fn in_range(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(Error::invalid(format!(
            "{name} must lie in [{lo}, {hi}], got {value}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Degradation stages.

/// Toner spread: each pixel darkens in proportion to the mean ink
/// (1 - intensity) of its 3x3 neighborhood, truncated at the borders.
/// A flat patch at level v therefore maps to v * (1 - gain * (1 - v)).
fn dot_gain_stage(img: &Raster, gain: f64) -> Raster {
    let mut out = Raster::zeros();
    for r in 0..HEIGHT {
        for c in 0..WIDTH {
            let mut ink = 0.0;
            let mut count = 0.0;
            for rr in r.saturating_sub(1)..=(r + 1).min(HEIGHT - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(WIDTH - 1) {
                    ink += 1.0 - img.get(rr, cc);
                    count += 1.0;
                }
            }
            out.set(r, c, img.get(r, c) * (1.0 - gain * ink / count));
        }
    }
    out
}

/// Normalized Gaussian kernel with radius ceil(3 sigma).
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma) * (i as f64 / sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}

/// Separable Gaussian blur with clamp-to-edge sampling.
fn blur_stage(img: &Raster, sigma: f64) -> Raster {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;

    let mut horizontal = Raster::zeros();
    for r in 0..HEIGHT {
        for c in 0..WIDTH {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let cc = (c as i64 + i as i64 - radius).clamp(0, WIDTH as i64 - 1);
                acc += w * img.get(r, cc as usize);
            }
            horizontal.set(r, c, acc);
        }
    }

    let mut out = Raster::zeros();
    for r in 0..HEIGHT {
        for c in 0..WIDTH {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let rr = (r as i64 + i as i64 - radius).clamp(0, HEIGHT as i64 - 1);
                acc += w * horizontal.get(rr as usize, c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

/// Bilinear lookup at a fractional position, clamped to the image.
fn bilinear_sample(img: &Raster, row: f64, col: f64) -> f64 {
    let row = row.clamp(0.0, (HEIGHT - 1) as f64);
    let col = col.clamp(0.0, (WIDTH - 1) as f64);
    let r0 = row.floor() as usize;
    let c0 = col.floor() as usize;
    let r1 = (r0 + 1).min(HEIGHT - 1);
    let c1 = (c0 + 1).min(WIDTH - 1);
    let fr = row - r0 as f64;
    let fc = col - c0 as f64;
    img.get(r0, c0) * (1.0 - fr) * (1.0 - fc)
        + img.get(r0, c1) * (1.0 - fr) * fc
        + img.get(r1, c0) * fr * (1.0 - fc)
        + img.get(r1, c1) * fr * fc
}

/// Resample the whole plane at a constant fractional offset.
fn translate(img: &Raster, d_row: f64, d_col: f64) -> Raster {
    let mut out = Raster::zeros();
    for r in 0..HEIGHT {
        for c in 0..WIDTH {
            out.set(r, c, bilinear_sample(img, r as f64 + d_row, c as f64 + d_col));
        }
    }
    out
}

/// Snap to `levels` evenly spaced values spanning [0, 1].
fn quantize_stage(img: &mut Raster, levels: u32) {
    let scale = (levels - 1) as f64;
    for v in img.data_mut() {
        *v = (*v * scale).round() / scale;
    }
}

/// Run one plane through every stage of the channel, drawing jitter
/// offsets (row first, then column) and per-pixel noise in row-major
/// order from `rng`.
fn degrade(plane: &Raster, cfg: &ChannelConfig, rng: &mut Stream) -> Raster {
    let mut img = plane.clone();

    if cfg.dot_gain != 0.0 {
        img = dot_gain_stage(&img, cfg.dot_gain);
    }
    if cfg.blur_sigma != 0.0 {
        img = blur_stage(&img, cfg.blur_sigma);
    }
    if cfg.jitter_max != 0.0 {
        let d_row = rng.uniform_in(-cfg.jitter_max, cfg.jitter_max);
        let d_col = rng.uniform_in(-cfg.jitter_max, cfg.jitter_max);
        img = translate(&img, d_row, d_col);
    }
    if cfg.gamma != 1.0 {
        for v in img.data_mut() {
            // Upstream stages keep intensities nonnegative; the floor
            // only guards the power against stray negative round-off.
            *v = v.max(0.0).powf(cfg.gamma);
        }
    }
    if cfg.contrast_scale != 1.0 || cfg.contrast_offset != 0.0 {
        for v in img.data_mut() {
            *v = cfg.contrast_scale * *v + cfg.contrast_offset;
        }
    }
    if cfg.noise_std != 0.0 {
        for v in img.data_mut() {
            *v += cfg.noise_std * rng.normal();
        }
    }
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    quantize_stage(&mut img, cfg.quant_levels);
    img
}

/// Channel pass for the image occupying stream slot `item`.
fn scan_plane(plane: &Raster, cfg: &ChannelConfig, item: u64) -> Raster {
    let mut rng = Stream::for_item(cfg.seed, Purpose::Channel, item);
    degrade(plane, cfg, &mut rng)
}

/// Print and scan one image in isolation (stream slot 0).
pub fn apply_channel(image: &BubbleImage, cfg: &ChannelConfig) -> Result<BubbleImage> {
    apply_channel_indexed(image, cfg, 0)
}

/// Print and scan one image, keying its random substream by its
/// position so batch results do not depend on batch composition.
pub fn apply_channel_indexed(
    image: &BubbleImage,
    cfg: &ChannelConfig,
    item: u64,
) -> Result<BubbleImage> {
    cfg.validate()?;
    let scanned = scan_plane(&image.pixels, cfg, item);
    Ok(BubbleImage::new(scanned, image.mark_type)
        .expect("channel output is clipped into the unit range"))
}

/// Snap a continuous attack output to the 8-bit grid it would be saved
/// and printed at. Grid images are fixed points of the identity
/// channel, which is what makes its transparency exact rather than
/// merely close.
pub fn quantize_to_byte_grid(plane: &Raster) -> Raster {
    let mut out = plane.clamped01();
    quantize_stage(&mut out, 256);
    out
}

// ---------------------------------------------------------------------------
// Tonal calibration.

/// What a flat patch printed at `level` reads back as, before noise.
///
/// Only the tonal stages act: dot gain (whose 3x3 ink mean on a flat
/// patch is just 1 - level), the gamma curve, and the contrast map.
/// Blur and translation are identities on flat patches, noise is zero
/// mean, and clipping/quantization are deliberately excluded so
/// calibration solves against the channel's exact tone curve. Stages at
/// identity values are skipped under the same rules as the channel
/// itself.
pub fn observe_reference(cfg: &ChannelConfig, level: f64) -> f64 {
    let mut v = level;
    if cfg.dot_gain != 0.0 {
        v *= 1.0 - cfg.dot_gain * (1.0 - v);
    }
    if cfg.gamma != 1.0 {
        v = v.max(0.0).powf(cfg.gamma);
    }
    if cfg.contrast_scale != 1.0 || cfg.contrast_offset != 0.0 {
        v = cfg.contrast_scale * v + cfg.contrast_offset;
    }
    v
}

/// A batch of scanned images together with the tonal references
/// observed from the same scan — the calibration-bar analog.
#[derive(Clone, Debug)]
pub struct ScannedBatch {
    /// Channel output per input image, in input order.
    pub images: Vec<Raster>,
    /// Observed reading of the dark patch printed at [`DARK_REF`].
    pub dark_ref: f64,
    /// Observed reading of the light patch printed at [`LIGHT_REF`].
    pub light_ref: f64,
}

/// Scan a labeled set through the channel (each image on its even,
/// clean-side stream slot) and record the calibration references.
pub fn scan_batch(images: &[BubbleImage], cfg: &ChannelConfig) -> Result<ScannedBatch> {
    cfg.validate()?;
    let scanned = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| scan_plane(&img.pixels, cfg, 2 * i as u64))
        .collect();
    Ok(ScannedBatch {
        images: scanned,
        dark_ref: observe_reference(cfg, DARK_REF),
        light_ref: observe_reference(cfg, LIGHT_REF),
    })
}

/// Affine tonal correction estimated from the calibration references.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Multiplicative term of the correction.
    pub scale: f64,
    /// Additive term of the correction.
    pub offset: f64,
}

impl Calibration {
    /// The do-nothing correction.
    pub fn identity() -> Self {
        Calibration {
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// Corrected copy of a scanned plane, clamped back into [0, 1].
    pub fn apply(&self, img: &Raster) -> Raster {
        let mut out = img.clone();
        for v in out.data_mut() {
            *v = (self.scale * *v + self.offset).clamp(0.0, 1.0);
        }
        out
    }
}

fn solve_calibration(dark_observed: f64, light_observed: f64) -> Result<Calibration> {
    let spread = light_observed - dark_observed;
    if spread.abs() < 1e-9 {
        return Err(Error::invalid(format!(
            "degenerate calibration references: dark and light patches \
             both read {dark_observed}"
        )));
    }
    let scale = (LIGHT_REF - DARK_REF) / spread;
    let offset = DARK_REF - scale * dark_observed;
    Ok(Calibration { scale, offset })
}

/// Affine map sending the batch's observed references back to
/// ([`DARK_REF`], [`LIGHT_REF`]); errors when the references coincide
/// and no tonal scale can be recovered.
pub fn calibrate_contrast(batch: &ScannedBatch) -> Result<Calibration> {
    solve_calibration(batch.dark_ref, batch.light_ref)
}

/// Calibration for a channel directly from its configuration, without
/// scanning a batch first.
pub fn channel_calibration(cfg: &ChannelConfig) -> Result<Calibration> {
    cfg.validate()?;
    solve_calibration(
        observe_reference(cfg, DARK_REF),
        observe_reference(cfg, LIGHT_REF),
    )
}

// ---------------------------------------------------------------------------
// Digital-versus-physical evaluation.

/// Robustness of one attacked set measured on both sides of the
/// channel. All three accuracies are over the same examples, so the
/// digital column is directly comparable to the physical one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalEval {
    /// Fraction still classified correctly after the adversarial
    /// artifact is printed, scanned, and calibrated.
    pub physical_robust_accuracy: f64,
    /// Fraction classified correctly when the clean original makes the
    /// same trip — the channel's own damage, with no attacker.
    pub channel_clean_accuracy: f64,
    /// Fraction still classified correctly on the digital 8-bit
    /// artifact, before the channel.
    pub digital_robust_accuracy: f64,
}

fn check_indices(data: &[BubbleImage], adv_set: &[(usize, AdvExample)]) -> Result<()> {
    for (idx, _) in adv_set {
        if *idx >= data.len() {
            return Err(Error::invalid(format!(
                "adversarial example references image {idx}, but the \
                 dataset has {} images",
                data.len()
            )));
        }
    }
    Ok(())
}

/// Evaluate an attacked set on the physical side of the channel.
///
/// Every adversarial image is first snapped to the printable 8-bit
/// grid, then degraded (odd stream slot; its clean original uses the
/// even slot) and tonally calibrated before classification. The
/// returned digital accuracy is measured on the same 8-bit artifact,
/// so with the identity channel the physical number equals it exactly.
pub fn physical_robust_accuracy(
    model: &Model,
    data: &[BubbleImage],
    adv_set: &[(usize, AdvExample)],
    cfg: &ChannelConfig,
) -> Result<PhysicalEval> {
    cfg.validate()?;
    check_indices(data, adv_set)?;
    if adv_set.is_empty() {
        return Err(Error::invalid(
            "cannot evaluate physical robustness on an empty adversarial set",
        ));
    }
    let calibration = channel_calibration(cfg)?;

    let verdicts: Vec<(bool, bool, bool)> = adv_set
        .par_iter()
        .map(|(idx, adv)| {
            let image = &data[*idx];
            let artifact = quantize_to_byte_grid(&adv.x_adv);
            let digital_ok = model.predict(&artifact) == image.label;

            let clean_scan = scan_plane(&image.pixels, cfg, 2 * *idx as u64);
            let clean_ok = model.predict(&calibration.apply(&clean_scan)) == image.label;

            let adv_scan = scan_plane(&artifact, cfg, 2 * *idx as u64 + 1);
            let physical_ok = model.predict(&calibration.apply(&adv_scan)) == image.label;

            (digital_ok, clean_ok, physical_ok)
        })
        .collect();

    let n = verdicts.len() as f64;
    let count = |pick: fn(&(bool, bool, bool)) -> bool| {
        verdicts.iter().filter(|v| pick(v)).count() as f64 / n
    };
    Ok(PhysicalEval {
        physical_robust_accuracy: count(|v| v.2),
        channel_clean_accuracy: count(|v| v.1),
        digital_robust_accuracy: count(|v| v.0),
    })
}

// ---------------------------------------------------------------------------
// Perturbation fidelity.

/// Shift a delta plane from [-1, 1] into [0, 1] for histogram and SSIM
/// comparison: add one half and clip. Deltas beyond half intensity
/// saturate; at the budgets studied here they never get close.
fn shift_delta(delta: &Raster) -> Raster {
    let mut out = delta.clone();
    for v in out.data_mut() {
        *v = (*v + 0.5).clamp(0.0, 1.0);
    }
    out
}

/// Compare the digital perturbation against what the channel leaves of
/// it.
///
/// The digital delta is `x_adv_digital - x`; the channel delta is
/// `x_adv_channel - x_clean_channel`, the difference between the two
/// scans the scanner actually produces. The caller supplies the
/// channel's rendering of the clean original so this stays a pure
/// function of images; batch stream discipline lives in
/// [`fidelity_batch`]. RMSE is computed on the raw deltas; the KL
/// divergence (digital ‖ channel, [`DEFAULT_KL_BINS`] bins) and SSIM
/// on copies shifted by +0.5 into the unit interval.
pub fn perturbation_fidelity(
    x: &Raster,
    x_adv_digital: &Raster,
    x_adv_channel: &Raster,
    x_clean_channel: &Raster,
) -> PerturbationMetrics {
    let delta_digital = x_adv_digital.minus(x);
    let delta_channel = x_adv_channel.minus(x_clean_channel);

    let shifted_digital = shift_delta(&delta_digital);
    let shifted_channel = shift_delta(&delta_channel);
    PerturbationMetrics {
        rmse: rmse(&delta_digital, &delta_channel),
        kl: kl_divergence_hist(&shifted_digital, &shifted_channel, DEFAULT_KL_BINS)
            .expect("default bin count is valid"),
        ssim: ssim(&shifted_digital, &shifted_channel),
    }
}

/// Fidelity metrics for every attacked example, scanning clean
/// originals and 8-bit adversarial artifacts through the channel on the
/// same stream slots as [`physical_robust_accuracy`]. Results come back
/// in input order, keyed by dataset index.
pub fn fidelity_batch(
    data: &[BubbleImage],
    adv_set: &[(usize, AdvExample)],
    cfg: &ChannelConfig,
) -> Result<Vec<(usize, PerturbationMetrics)>> {
    cfg.validate()?;
    check_indices(data, adv_set)?;
    Ok(adv_set
        .par_iter()
        .map(|(idx, adv)| {
            let x = &data[*idx].pixels;
            let artifact = quantize_to_byte_grid(&adv.x_adv);
            let clean_scan = scan_plane(x, cfg, 2 * *idx as u64);
            let adv_scan = scan_plane(&artifact, cfg, 2 * *idx as u64 + 1);
            (
                *idx,
                perturbation_fidelity(x, &artifact, &adv_scan, &clean_scan),
            )
        })
        .collect())
}
