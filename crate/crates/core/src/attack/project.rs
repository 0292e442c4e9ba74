//! Projections onto the six perturbation-budget sets.
//!
//! All operate in place on a flat 2000-entry delta. Each is an exact
//! (not approximate) projection for its set and is idempotent:
//!
//! * `project_linf` — componentwise clamp, the l-inf-nearest point.
//! * `project_l2` — radial scaling, the Euclidean projection.
//! * `project_l1` — Euclidean projection onto the l1 ball by
//!   sort-and-soft-threshold (checked against a Lagrange-bisection oracle
//!   in the tests).
//! * `project_l0_topk` — keep the k largest magnitudes (ties to the lower
//!   index), which maximizes retained l2 mass.
//! * `project_l0_linf` — clamp to [-eps, eps] first, then top-k of the
//!   clamped values, so both constraints hold simultaneously.
//! * `project_l0_sigma` — clamp each component to kappa times the image's
//!   local-deviation map, then top-k.

use crate::image::{Raster, HEIGHT, WIDTH};

/// Componentwise clamp to [-epsilon, epsilon].
pub fn project_linf(delta: &mut [f64], epsilon: f64) {
    for d in delta {
        *d = d.clamp(-epsilon, epsilon);
    }
}

/// Scale into the l2 ball of radius epsilon if outside.
pub fn project_l2(delta: &mut [f64], epsilon: f64) {
    let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm > epsilon {
        let f = epsilon / norm;
        for d in delta {
            *d *= f;
        }
    }
}

/// Exact Euclidean projection onto the l1 ball of radius epsilon
/// (sort magnitudes, find the soft-threshold that lands on the sphere).
pub fn project_l1(delta: &mut [f64], epsilon: f64) {
    let l1: f64 = delta.iter().map(|d| d.abs()).sum();
    if l1 <= epsilon {
        return;
    }
    let mut mags: Vec<f64> = delta.iter().map(|d| d.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).expect("no NaN deltas"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - epsilon) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for d in delta {
        *d = d.signum() * (d.abs() - theta).max(0.0);
    }
}

/// Keep the k largest-magnitude components, zero the rest; magnitude ties
/// resolve toward the lower index.
pub fn project_l0_topk(delta: &mut [f64], k: usize) {
    if k >= delta.len() {
        return;
    }
    let mut order: Vec<usize> = (0..delta.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        delta[b]
            .abs()
            .partial_cmp(&delta[a].abs())
            .expect("no NaN deltas")
            .then(a.cmp(&b))
    });
    for &i in &order[k..] {
        delta[i] = 0.0;
    }
}

/// Clamp to [-epsilon, epsilon], then keep the top k of the clamped
/// values. Clamping first means the survivors are chosen by their bounded
/// magnitudes, and both constraints hold on exit.
pub fn project_l0_linf(delta: &mut [f64], k: usize, epsilon: f64) {
    project_linf(delta, epsilon);
    project_l0_topk(delta, k);
}

fn population_sd(values: &[f64]) -> f64 {
    // An exactly constant neighborhood must yield exactly zero; the
    // mean of three equal values rounds, which would leave ~1e-16 of
    // spurious deviation.
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Per-pixel perturbation bound from local intensity variation: the
/// smaller of the standard deviations of the horizontal and vertical
/// 3-pixel neighborhoods (one-sided at image borders). Flat regions get 0,
/// so perturbations are confined to pixels that already vary locally.
pub fn sigma_map(image: &Raster) -> Vec<f64> {
    let mut sigma = Vec::with_capacity(HEIGHT * WIDTH);
    for r in 0..HEIGHT {
        for c in 0..WIDTH {
            let mut horiz = Vec::with_capacity(3);
            for cc in c.saturating_sub(1)..=(c + 1).min(WIDTH - 1) {
                horiz.push(image.get(r, cc));
            }
            let mut vert = Vec::with_capacity(3);
            for rr in r.saturating_sub(1)..=(r + 1).min(HEIGHT - 1) {
                vert.push(image.get(rr, c));
            }
            sigma.push(population_sd(&horiz).min(population_sd(&vert)));
        }
    }
    sigma
}

/// Clamp each component to kappa times the image's sigma map, then keep
/// the top k magnitudes.
pub fn project_l0_sigma(delta: &mut [f64], image: &Raster, k: usize, kappa: f64) {
    let sigma = sigma_map(image);
    for (d, s) in delta.iter_mut().zip(&sigma) {
        let bound = kappa * s;
        *d = d.clamp(-bound, bound);
    }
    project_l0_topk(delta, k);
}
