//! Probabilistic model of a two-candidate mark-sense election under ballot
//! compromise.
//!
//! Votes are coded A = -1, B = +1, blank/invalid = 0. True voter behavior
//! is [`VoteDistribution`]: a B vote with probability `p_b`, an A vote with
//! probability `p_a = p_b - delta` (so `delta` is B's expected margin), and
//! blank otherwise. An attacker controls a random fraction `p_c` of
//! ballots; a compromised ballot that would have gone to B is spoiled into
//! an overvote and discarded (contributes 0), while every other compromised
//! ballot reads as an A vote. The election flips when the observed mean
//! ballot value `w_bar` goes negative.
//!
//! [`solve_pc_star`] answers the central question — the smallest `p_c` that
//! flips the race with probability at least `1 - alpha` under the normal
//! approximation — in closed form, as the validated root of a quadratic.
//! [`simulate_election`] and [`monte_carlo_success`] replay the same
//! process ballot by ballot so the closed form can be checked against
//! nothing but the model definition itself.

pub mod normal;

use serde::Serialize;

use crate::rng::{Purpose, Stream};
use crate::{Error, Result};
use normal::{phi, phi_inv};

/// Tolerance for accepting a quadratic root against the unsquared
/// flip condition.
const ROOT_TOLERANCE: f64 = 1e-9;

/// True voter behavior: B-vote probability and expected margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoteDistribution {
    p_b: f64,
    delta: f64,
}

impl VoteDistribution {
    /// Build a distribution from B's vote probability and the margin
    /// `delta = p_b - p_a`.
    ///
    /// Requires `0 <= delta <= p_b <= 1` and a nonnegative blank
    /// probability `1 - 2 p_b + delta`.
    pub fn new(p_b: f64, delta: f64) -> Result<Self> {
        if !p_b.is_finite() || !delta.is_finite() {
            return Err(Error::invalid("p_b and delta must be finite"));
        }
        if !(0.0..=1.0).contains(&p_b) {
            return Err(Error::invalid(format!("p_b = {p_b} outside [0, 1]")));
        }
        if delta < 0.0 {
            return Err(Error::invalid(format!(
                "delta = {delta} negative (candidate B must not trail)"
            )));
        }
        if p_b - delta < 0.0 {
            return Err(Error::invalid(format!(
                "p_a = p_b - delta = {} negative",
                p_b - delta
            )));
        }
        if 1.0 - 2.0 * p_b + delta < 0.0 {
            return Err(Error::invalid(format!(
                "blank probability 1 - 2 p_b + delta = {} negative",
                1.0 - 2.0 * p_b + delta
            )));
        }
        Ok(VoteDistribution { p_b, delta })
    }

    /// Probability of a B (+1) vote.
    pub fn p_b(&self) -> f64 {
        self.p_b
    }

    /// Probability of an A (-1) vote.
    pub fn p_a(&self) -> f64 {
        self.p_b - self.delta
    }

    /// Probability of a blank (0) ballot, defined so the three
    /// probabilities sum to 1 exactly in floating point.
    pub fn p_0(&self) -> f64 {
        1.0 - (self.p_a() + self.p_b)
    }

    /// Expected margin `p_b - p_a`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Quantities the closed-form solver is written in terms of.
    pub fn derived(&self) -> DerivedQuantities {
        DerivedQuantities {
            d: 1.0 + self.delta - self.p_b,
            v0: 2.0 * self.p_b - self.delta - self.delta * self.delta,
            v1: self.p_b * (1.0 - self.p_b),
        }
    }
}

/// Derived constants of a [`VoteDistribution`]:
/// `d = 1 + delta - p_b` (per-ballot mean shift from compromising),
/// `v0` the true-vote variance, and `v1 = p_b (1 - p_b)` the variance of a
/// compromised ballot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedQuantities {
    pub d: f64,
    pub v0: f64,
    pub v1: f64,
}

/// Mean and variance of the true vote value: `(delta, 2 p_b - delta - delta^2)`.
pub fn true_vote_moments(dist: &VoteDistribution) -> (f64, f64) {
    let q = dist.derived();
    (dist.delta(), q.v0)
}

/// Mean and variance of an observed ballot when each ballot is
/// independently compromised with probability `p_c`.
///
/// Mean is `delta - p_c d`; variance mixes the clean and compromised
/// variances plus the between-group term `p_c (1 - p_c) d^2`.
pub fn compromised_vote_moments(dist: &VoteDistribution, p_c: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p_c) {
        return Err(Error::invalid(format!("p_c = {p_c} outside [0, 1]")));
    }
    let q = dist.derived();
    let mean = dist.delta() - p_c * q.d;
    let variance = (1.0 - p_c) * q.v0 + p_c * q.v1 + p_c * (1.0 - p_c) * q.d * q.d;
    Ok((mean, variance))
}

/// Per-ballot sampler with probabilities quantized to 32-bit thresholds.
///
/// Each ballot consumes exactly one 64-bit word: the low half drives the
/// compromise indicator, the high half the vote. Threshold quantization
/// biases each probability by less than 3e-10 — orders of magnitude below
/// Monte Carlo resolution at any feasible trial count.
#[derive(Clone, Copy, Debug)]
pub struct VoteSampler {
    t_compromise: u64,
    t_clean_a: u64,
    t_clean_ab: u64,
    t_comp_a: u64,
}

const THRESHOLD_SCALE: f64 = 4_294_967_296.0; // 2^32

impl VoteSampler {
    /// Precompute thresholds for a distribution and compromise rate.
    pub fn new(dist: &VoteDistribution, p_c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_c) {
            return Err(Error::invalid(format!("p_c = {p_c} outside [0, 1]")));
        }
        let to_threshold = |p: f64| (p * THRESHOLD_SCALE).round() as u64;
        Ok(VoteSampler {
            t_compromise: to_threshold(p_c),
            t_clean_a: to_threshold(dist.p_a()),
            t_clean_ab: to_threshold(dist.p_a() + dist.p_b()),
            t_comp_a: to_threshold(1.0 - dist.p_b()),
        })
    }

    /// Vote value given the compromise indicator and a uniform 32-bit draw.
    ///
    /// Clean ballots follow the true distribution; compromised ballots read
    /// -1 unless the voter would have chosen B, in which case the ballot is
    /// an overvote and is discarded (0).
    #[inline]
    pub fn vote(&self, compromised: bool, draw32: u64) -> i32 {
        debug_assert!(draw32 < 1 << 32);
        if compromised {
            if draw32 < self.t_comp_a {
                -1
            } else {
                0
            }
        } else if draw32 < self.t_clean_a {
            -1
        } else if draw32 < self.t_clean_ab {
            1
        } else {
            0
        }
    }

    /// Full ballot from one 64-bit word: indicator from the low half,
    /// vote from the high half.
    #[inline]
    pub fn ballot(&self, word: u64) -> i32 {
        let compromised = (word & 0xFFFF_FFFF) < self.t_compromise;
        self.vote(compromised, word >> 32)
    }
}

/// Draw one vote given a known compromise indicator.
pub fn sample_compromised_vote(
    dist: &VoteDistribution,
    compromised: bool,
    rng: &mut Stream,
) -> i32 {
    // p_c is irrelevant when the indicator is supplied.
    let sampler = VoteSampler::new(dist, 0.0).expect("p_c = 0 always valid");
    sampler.vote(compromised, rng.next_u64() >> 32)
}

/// Normal-approximation probability that candidate A ends up strictly
/// ahead (`w_bar < 0`) with `n` ballots.
///
/// Degenerate zero-variance inputs return the point-mass answer: 1 when
/// the mean is negative, else 0 (a deterministic tie is a failed flip).
pub fn success_probability(dist: &VoteDistribution, p_c: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let (mean, variance) = compromised_vote_moments(dist, p_c)?;
    if variance <= 0.0 {
        return Ok(if mean < 0.0 { 1.0 } else { 0.0 });
    }
    let se = (variance / n as f64).sqrt();
    Ok(phi(-mean / se))
}

/// Output of [`solve_pc_star`]: the minimal compromised-ballot fraction,
/// the whole-ballot count it implies, the quadratic coefficients, and the
/// confidence quantile used.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CompromiseAssessment {
    /// Minimal compromising fraction, when one exists in [0, 1].
    pub p_c_star: Option<f64>,
    /// `ceil(n * p_c_star)` — whole ballots the attacker must touch.
    pub ballots_required: Option<u64>,
    /// Constant coefficient of the solved quadratic.
    pub k0: f64,
    /// Linear coefficient.
    pub k1: f64,
    /// Quadratic coefficient (positive for any valid input).
    pub k2: f64,
    /// `phi_inv(1 - alpha)`.
    pub z_value: f64,
    /// True when a validated root exists in [0, 1].
    pub feasible: bool,
}

/// Left side of the unsquared flip condition at compromise fraction `p`:
/// `delta - p d + z sqrt(Var(p)/n)`. The flip succeeds with the required
/// confidence when this is <= 0.
fn unsquared_condition(dist: &VoteDistribution, p: f64, z: f64, n: u64) -> f64 {
    let q = dist.derived();
    let variance =
        ((1.0 - p) * q.v0 + p * q.v1 + p * (1.0 - p) * q.d * q.d).max(0.0);
    dist.delta() - p * q.d + z * (variance / n as f64).sqrt()
}

/// Slope of [`unsquared_condition`] in `p`. Where the variance degenerates
/// to zero the quantile term is dropped and only the mean slope remains.
fn unsquared_condition_slope(dist: &VoteDistribution, p: f64, z: f64, n: u64) -> f64 {
    let q = dist.derived();
    let variance =
        ((1.0 - p) * q.v0 + p * q.v1 + p * (1.0 - p) * q.d * q.d).max(0.0);
    if z == 0.0 || variance <= 0.0 {
        return -q.d;
    }
    let dvar = q.v1 - q.v0 + (1.0 - 2.0 * p) * q.d * q.d;
    -q.d + z * dvar / (2.0 * (variance * n as f64).sqrt())
}

/// Refine a quadratic-formula root of the flip condition with a few guarded
/// Newton steps on the unsquared form.
///
/// Squaring-then-solving loses half the significant digits whenever the two
/// roots nearly coincide — at `z = 0` they coincide exactly, and rounding in
/// the discriminant can still split them by ~1e-8 relative. Newton against
/// the original condition restores full precision in one or two steps. The
/// iterate with the smallest residual wins, so polishing never degrades the
/// starting point.
fn polish_root(dist: &VoteDistribution, start: f64, z: f64, n: u64) -> f64 {
    let mut best_p = start;
    let mut best_resid = unsquared_condition(dist, start, z, n).abs();
    let mut p = start;
    for _ in 0..4 {
        let f = unsquared_condition(dist, p, z, n);
        let slope = unsquared_condition_slope(dist, p, z, n);
        if !f.is_finite() || !slope.is_finite() || slope.abs() < 1e-30 {
            break;
        }
        let next = (p - f / slope).clamp(0.0, 1.0);
        if next == p {
            break;
        }
        p = next;
        let resid = unsquared_condition(dist, p, z, n).abs();
        if resid < best_resid {
            best_p = p;
            best_resid = resid;
        }
    }
    best_p
}

/// Solve for the smallest compromise fraction that flips the election with
/// probability at least `1 - alpha` under the normal approximation.
///
/// Forms the quadratic `k2 p^2 + k1 p + k0 = 0` obtained by squaring the
/// flip condition, computes both roots with the numerically stable
/// formula, and — because squaring admits spurious solutions — accepts a
/// root only if substituting it back into the unsquared condition leaves a
/// residual <= 1e-9. Candidate `p = 0` is screened the same way (for
/// alpha > 1/2 the condition can already hold with no compromise at all).
/// The smallest valid candidate in [0, 1] wins and, when it is a genuine
/// root rather than the zero boundary, gets a final Newton polish against
/// the unsquared condition (see [`polish_root`]); if no candidate survives
/// the assessment is marked infeasible (never NaN).
pub fn solve_pc_star(dist: &VoteDistribution, n: u64, alpha: f64) -> Result<CompromiseAssessment> {
    if dist.delta() <= 0.0 {
        return Err(Error::invalid(
            "solver requires delta > 0 (candidate B strictly ahead)",
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} outside (0, 1)")));
    }

    let q = dist.derived();
    let (delta, d, v0, v1) = (dist.delta(), q.d, q.v0, q.v1);
    let nf = n as f64;
    let z = phi_inv(1.0 - alpha);
    let z2 = z * z;

    let k2 = (nf + z2) * d * d;
    let k1 = -2.0 * nf * delta * d - z2 * (v1 - v0 + d * d);
    let k0 = nf * delta * delta - z2 * v0;

    // A discriminant that is only a rounding error below zero is a double
    // root (the z = 0 collapse hits this exactly).
    let mut disc = k1 * k1 - 4.0 * k2 * k0;
    if disc < 0.0 && disc > -1e-12 * (k1 * k1).max((4.0 * k2 * k0).abs()) {
        disc = 0.0;
    }

    let mut candidates: Vec<f64> = vec![0.0];
    if disc >= 0.0 {
        let sq = disc.sqrt();
        if k1 != 0.0 {
            // Stable form: avoid subtracting nearly equal magnitudes.
            let qq = -0.5 * (k1 + k1.signum() * sq);
            candidates.push(qq / k2);
            if qq != 0.0 {
                candidates.push(k0 / qq);
            }
        } else {
            candidates.push(sq / (2.0 * k2));
            candidates.push(-sq / (2.0 * k2));
        }
    }

    // Track whether the winner is a quadratic root (polishable zero of the
    // condition) or the p = 0 boundary screen (a minimum, not a root — a
    // Newton step from there would walk uphill to the crossing).
    let mut best: Option<(f64, bool)> = None;
    for (index, &c) in candidates.iter().enumerate() {
        // Tolerate sub-ulp spill outside [0, 1] before clamping.
        if !(-1e-12..=1.0 + 1e-12).contains(&c) {
            continue;
        }
        let p = c.clamp(0.0, 1.0);
        if unsquared_condition(dist, p, z, n) <= ROOT_TOLERANCE
            && best.is_none_or(|(b, _)| p < b)
        {
            best = Some((p, index > 0));
        }
    }
    let best = best.map(|(p, from_root)| {
        if from_root {
            polish_root(dist, p, z, n)
        } else {
            p
        }
    });

    Ok(CompromiseAssessment {
        p_c_star: best,
        ballots_required: best.map(|p| (nf * p).ceil() as u64),
        k0,
        k1,
        k2,
        z_value: z,
        feasible: best.is_some(),
    })
}

/// Which candidate took strictly more votes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

/// Tally of one simulated election.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElectionResult {
    pub votes_a: u64,
    pub votes_b: u64,
    pub discarded_or_blank: u64,
    /// `(votes_b - votes_a) / n`.
    pub w_bar: f64,
    pub winner: Winner,
}

fn run_trial(sampler: &VoteSampler, n: u64, stream: &mut Stream) -> ElectionResult {
    let mut votes_a = 0u64;
    let mut votes_b = 0u64;
    for _ in 0..n {
        match sampler.ballot(stream.next_u64()) {
            -1 => votes_a += 1,
            1 => votes_b += 1,
            _ => {}
        }
    }
    let w_bar = (votes_b as f64 - votes_a as f64) / n as f64;
    let winner = match votes_b.cmp(&votes_a) {
        std::cmp::Ordering::Greater => Winner::B,
        std::cmp::Ordering::Less => Winner::A,
        std::cmp::Ordering::Equal => Winner::Tie,
    };
    ElectionResult {
        votes_a,
        votes_b,
        discarded_or_blank: n - votes_a - votes_b,
        w_bar,
        winner,
    }
}

/// Simulate one election ballot by ballot.
///
/// Each ballot draws an independent Bernoulli(`p_c`) compromise indicator
/// and a vote through the same sampler the distribution defines; identical
/// seeds give identical results. This run is bitwise-equal to trial 0 of
/// [`monte_carlo_success`] with the same seed.
pub fn simulate_election(
    dist: &VoteDistribution,
    p_c: f64,
    n: u64,
    seed: u64,
) -> Result<ElectionResult> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let sampler = VoteSampler::new(dist, p_c)?;
    let mut stream = Stream::for_item(seed, Purpose::Trial, 0);
    Ok(run_trial(&sampler, n, &mut stream))
}

/// Fraction of simulated elections the attacker flips, plus a 95% CI
/// half-width.
///
/// Trial `i` draws from the substream `(seed, Trial, i)`, so results are
/// reproducible regardless of how trials are scheduled across threads.
pub fn monte_carlo_success(
    dist: &VoteDistribution,
    p_c: f64,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let sampler = VoteSampler::new(dist, p_c)?;

    use rayon::prelude::*;
    let wins: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut stream = Stream::for_item(seed, Purpose::Trial, trial);
            let result = run_trial(&sampler, n, &mut stream);
            u64::from(result.winner == Winner::A)
        })
        .sum();

    let rate = wins as f64 / trials as f64;
    let ci_halfwidth = 1.96 * (rate * (1.0 - rate) / trials as f64).sqrt();
    Ok((rate, ci_halfwidth))
}
