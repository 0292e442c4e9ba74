//! Image-distance metrics for the digital-versus-physical comparison:
//! root-mean-square error, histogram KL divergence, and SSIM.
//!
//! All three operate on [`Raster`]s, whose fixed shape makes the usual
//! same-dimensions precondition automatic. Values outside [0, 1] are
//! legal inputs for `rmse` and `ssim`; the KL histogram clamps into
//! [0, 1] before binning, so callers comparing perturbation deltas
//! shift them into the unit interval first.

use serde::{Deserialize, Serialize};

use crate::{Error, Raster, Result, HEIGHT, PIXELS, WIDTH};

/// Histogram resolution used by the fidelity reports.
pub const DEFAULT_KL_BINS: usize = 50;

/// Additive mass given to every histogram bin before normalizing, so
/// the divergence stays finite when one image misses a bin entirely.
pub const KL_EPSILON: f64 = 1e-9;

const SSIM_WINDOW: usize = 8;
// Standard stabilizers for a unit dynamic range.
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// How faithfully a perturbation survives: distance and similarity
/// between the digital delta and the delta measured after the channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationMetrics {
    /// Root-mean-square difference between the two deltas.
    pub rmse: f64,
    /// KL(digital ‖ channel) between shifted-delta histograms.
    pub kl: f64,
    /// Mean local SSIM between the shifted deltas, in [-1, 1].
    pub ssim: f64,
}

/// Root-mean-square pixel difference; zero exactly when the inputs are
/// identical, and symmetric in its arguments.
pub fn rmse(a: &Raster, b: &Raster) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (sum / PIXELS as f64).sqrt()
}

/// Smoothed intensity histogram: clamp each pixel into [0, 1], drop it
/// into one of `bins` equal cells (1.0 lands in the last), add
/// [`KL_EPSILON`] to every cell, and normalize.
fn histogram(img: &Raster, bins: usize) -> Vec<f64> {
    let mut counts = vec![0u32; bins];
    for &v in img.data() {
        let cell = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[cell] += 1;
    }
    let total = PIXELS as f64 + bins as f64 * KL_EPSILON;
    counts
        .iter()
        .map(|&c| (c as f64 + KL_EPSILON) / total)
        .collect()
}

/// KL divergence KL(P ‖ Q) between the smoothed pixel histograms of `a`
/// and `b` (natural log). Identical images give exactly zero; smoothing
/// keeps the value finite for any pair.
pub fn kl_divergence_hist(a: &Raster, b: &Raster, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::invalid(format!(
            "histogram needs at least 2 bins, got {bins}"
        )));
    }
    let p = histogram(a, bins);
    let q = histogram(b, bins);
    let kl: f64 = p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    // Gibbs' inequality makes the sum nonnegative in exact arithmetic;
    // the floor absorbs summation round-off on near-equal histograms.
    Ok(kl.max(0.0))
}

/// Mean structural similarity over all 8x8 windows at stride 1
/// (43 x 33 = 1419 windows), with population moments per window.
///
/// Bitwise-identical inputs score exactly 1.0: every window statistic
/// of `a` is then the same floating-point expression as its `b`
/// counterpart, so each window ratio is exactly one.
pub fn ssim(a: &Raster, b: &Raster) -> f64 {
    let mut total = 0.0;
    let mut windows = 0usize;
    for r0 in 0..=(HEIGHT - SSIM_WINDOW) {
        for c0 in 0..=(WIDTH - SSIM_WINDOW) {
            total += window_ssim(a, b, r0, c0);
            windows += 1;
        }
    }
    total / windows as f64
}

fn window_ssim(a: &Raster, b: &Raster, r0: usize, c0: usize) -> f64 {
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for r in r0..r0 + SSIM_WINDOW {
        for c in c0..c0 + SSIM_WINDOW {
            sum_a += a.get(r, c);
            sum_b += b.get(r, c);
        }
    }
    let mean_a = sum_a / n;
    let mean_b = sum_b / n;

    // Two-pass moments: summing squared deviations keeps the variances
    // from cancelling catastrophically on near-constant windows.
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for r in r0..r0 + SSIM_WINDOW {
        for c in c0..c0 + SSIM_WINDOW {
            let da = a.get(r, c) - mean_a;
            let db = b.get(r, c) - mean_b;
            var_a += da * da;
            var_b += db * db;
            cov += da * db;
        }
    }
    var_a /= n;
    var_b /= n;
    cov /= n;

    let luminance = (2.0 * mean_a * mean_b + SSIM_C1) / (mean_a * mean_a + mean_b * mean_b + SSIM_C1);
    let structure = (2.0 * cov + SSIM_C2) / (var_a + var_b + SSIM_C2);
    luminance * structure
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, Stream};

    fn random_raster(stream: &mut Stream) -> Raster {
        let mut r = Raster::zeros();
        for v in r.data_mut() {
            *v = stream.uniform();
        }
        r
    }

    #[test]
    fn rmse_identities() {
        let mut s = Stream::for_item(11, Purpose::Channel, 0);
        let a = random_raster(&mut s);
        assert_eq!(rmse(&a, &a), 0.0);

        // A constant offset with no clipping is recovered exactly.
        let mut b = a.clone();
        for v in b.data_mut() {
            *v += 0.1;
        }
        assert!((rmse(&a, &b) - 0.1).abs() < 1e-12);
        assert_eq!(rmse(&a, &b), rmse(&b, &a));
    }

    #[test]
    fn kl_zero_on_identical_images() {
        let mut s = Stream::for_item(12, Purpose::Channel, 0);
        let a = random_raster(&mut s);
        assert_eq!(kl_divergence_hist(&a, &a, DEFAULT_KL_BINS).unwrap(), 0.0);
    }

    #[test]
    fn kl_two_bin_closed_form() {
        // Three quarters dark versus one quarter dark, on a two-bin
        // histogram: 1500/500 counts against 500/1500.
        let mut a = Raster::filled(0.9);
        let mut b = Raster::filled(0.9);
        for i in 0..PIXELS {
            let (r, c) = (i / WIDTH, i % WIDTH);
            if i < 1500 {
                a.set(r, c, 0.1);
            }
            if i < 500 {
                b.set(r, c, 0.1);
            }
        }
        let kl = kl_divergence_hist(&a, &b, 2).unwrap();

        // Smoothed closed form, written out from the histogram
        // definition rather than calling it.
        let total = 2000.0 + 2.0 * KL_EPSILON;
        let p = [(1500.0 + KL_EPSILON) / total, (500.0 + KL_EPSILON) / total];
        let q = [(500.0 + KL_EPSILON) / total, (1500.0 + KL_EPSILON) / total];
        let expected = p[0] * (p[0] / q[0]).ln() + p[1] * (p[1] / q[1]).ln();
        assert!((kl - expected).abs() < 1e-12, "kl {kl} vs {expected}");

        // The epsilon is far too small to move the unsmoothed value
        // 0.75 ln 3 + 0.25 ln(1/3) = 0.5 ln 3 at this scale.
        let unsmoothed = 0.5 * 3.0f64.ln();
        assert!((kl - unsmoothed).abs() < 1e-8);
    }

    #[test]
    fn kl_nonnegative_and_asymmetric() {
        let mut s = Stream::for_item(13, Purpose::Channel, 0);
        for _ in 0..50 {
            let a = random_raster(&mut s);
            let mut b = random_raster(&mut s);
            for v in b.data_mut() {
                *v = (*v * 0.6 + 0.2).clamp(0.0, 1.0);
            }
            let forward = kl_divergence_hist(&a, &b, DEFAULT_KL_BINS).unwrap();
            let backward = kl_divergence_hist(&b, &a, DEFAULT_KL_BINS).unwrap();
            assert!(forward >= 0.0);
            assert!(backward >= 0.0);
            assert!(forward > 0.0, "distinct histograms must diverge");
            assert_ne!(forward, backward, "direction is part of the definition");
        }
    }

    #[test]
    fn kl_rejects_degenerate_binning() {
        let a = Raster::filled(0.5);
        assert!(kl_divergence_hist(&a, &a, 1).is_err());
        assert!(kl_divergence_hist(&a, &a, 0).is_err());
        assert!(kl_divergence_hist(&a, &a, 2).is_ok());
    }

    #[test]
    fn ssim_is_exactly_one_on_identical_images() {
        let mut s = Stream::for_item(14, Purpose::Channel, 0);
        let a = random_raster(&mut s);
        assert_eq!(ssim(&a, &a), 1.0);
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut s = Stream::for_item(15, Purpose::Channel, 0);
        let a = random_raster(&mut s);
        let b = random_raster(&mut s);
        assert_eq!(ssim(&a, &b), ssim(&b, &a));
    }

    #[test]
    fn ssim_constant_pair_matches_closed_form() {
        // Zero variance everywhere leaves only the luminance term:
        // (2 c1 c2 + C1) / (c1^2 + c2^2 + C1), identical in every window.
        let (c1, c2) = (0.3, 0.7);
        let a = Raster::filled(c1);
        let b = Raster::filled(c2);
        let expected = (2.0 * c1 * c2 + SSIM_C1) / (c1 * c1 + c2 * c2 + SSIM_C1);
        assert!((ssim(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_penalizes_structural_change() {
        let mut s = Stream::for_item(16, Purpose::Channel, 0);
        let a = random_raster(&mut s);
        let mut shifted = Raster::zeros();
        for r in 0..HEIGHT {
            for c in 0..WIDTH {
                shifted.set(r, c, a.get(r, (c + 3) % WIDTH));
            }
        }
        let score = ssim(&a, &shifted);
        assert!(score < 0.9, "misaligned copy should score well below 1, got {score}");
    }

    #[test]
    fn metric_identities_deviate_on_distinct_inputs() {
        let a = Raster::filled(0.4);
        let mut b = a.clone();
        b.set(20, 25, 0.9);
        assert!(rmse(&a, &b) > 0.0);
        assert!(kl_divergence_hist(&a, &b, DEFAULT_KL_BINS).unwrap() > 0.0);
        assert!(ssim(&a, &b) < 1.0);
    }
}
