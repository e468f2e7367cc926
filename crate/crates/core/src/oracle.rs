//! Desk-scale verification oracles: exhaustive enumeration, brute-force
//! optimization, finite-difference derivative checks, and statistical test
//! helpers.
//!
//! Everything here is written for independence from the production kernels:
//! R-functions by explicit subset sums, optima by scanning every feasible
//! design, derivatives by difference quotients. The rest of the crate's test
//! suites (and the `check` CLI subcommand) treat these as ground truth.

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Error;
use crate::objectives::Objective;
use crate::optimizer::{ConstraintSpec, Direction};
use crate::Result;

/// Largest dimension accepted for exhaustive enumeration (2^24 designs).
pub const ENUMERATION_CAP: usize = 24;

// ---------------------------------------------------------------------------
// Counting and enumeration
// ---------------------------------------------------------------------------

/// Exact binomial coefficient `C(n, k)`.
///
/// Intended for enumeration-scale arguments; panics on overflow past `u64`
/// (far beyond the enumeration cap).
#[must_use]
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut value: u128 = 1;
    for i in 1..=k {
        value = value * (n - k + i) as u128 / i as u128;
    }
    u64::try_from(value).expect("binomial coefficient overflows u64")
}

/// Binomial coefficient as a float, usable at dimensions far beyond the
/// enumeration cap (for explored-fraction reporting).
#[must_use]
pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut value = 1.0;
    for i in 1..=k {
        value *= (n - k + i) as f64;
        value /= i as f64;
    }
    value
}

/// Exhaustive iterator over the feasible designs of a constraint, in
/// canonical-key order (the design read as a little-endian integer,
/// ascending — entry 0 is the least significant bit).
#[derive(Debug, Clone)]
pub struct FeasibleEnumeration {
    n: usize,
    admissible: Vec<bool>,
    next: u64,
    end: u64,
}

impl FeasibleEnumeration {
    /// Prepares enumeration of all designs of dimension `n` satisfying
    /// `constraint`.
    ///
    /// # Errors
    /// [`Error::EnumerationCap`] above [`ENUMERATION_CAP`]; constraint
    /// validation errors as in [`ConstraintSpec::budgets`].
    pub fn new(constraint: &ConstraintSpec, n: usize) -> Result<Self> {
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n,
                cap: ENUMERATION_CAP,
            });
        }
        let mut admissible = vec![false; n + 1];
        for z in constraint.budgets(n)? {
            admissible[z] = true;
        }
        Ok(FeasibleEnumeration {
            n,
            admissible,
            next: 0,
            end: 1u64 << n,
        })
    }

    /// Design dimension.
    #[must_use]
    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Number of feasible designs, `Σ_{admissible z} C(n, z)`.
    #[must_use]
    pub fn cardinality(&self) -> u64 {
        self.admissible
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(|(z, _)| binomial(self.n, z))
            .sum()
    }
}

/// Expands the little-endian bit pattern `v` into a design vector.
fn decode_design(v: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((v >> i) & 1) as u8).collect()
}

impl Iterator for FeasibleEnumeration {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        while self.next < self.end {
            let v = self.next;
            self.next += 1;
            if self.admissible[v.count_ones() as usize] {
                return Some(decode_design(v, self.n));
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Brute force
// ---------------------------------------------------------------------------

/// Outcome of an exhaustive scan: the exact optimal value and *all* designs
/// attaining it, in canonical-key order.
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    /// The optimal objective value.
    pub value: f64,
    /// Every feasible design attaining `value` (exact float equality).
    pub designs: Vec<Vec<u8>>,
}

/// Scans every feasible design and returns the exact optimum.
///
/// Evaluation is chunked across threads; chunk results are merged in index
/// order, so the outcome (including the order of tied designs) is
/// independent of thread count.
///
/// # Errors
/// Enumeration-cap and constraint errors as in [`FeasibleEnumeration::new`];
/// objective evaluation failures propagate.
pub fn brute_force_optimum(
    objective: &dyn Objective,
    constraint: &ConstraintSpec,
    direction: Direction,
) -> Result<BruteForceResult> {
    let n = objective.dimension();
    let enumeration = FeasibleEnumeration::new(constraint, n)?;
    let admissible = enumeration.admissible.clone();
    let end = 1u64 << n;
    const CHUNK: u64 = 1 << 14;
    let starts: Vec<u64> = (0..end).step_by(CHUNK as usize).collect();

    struct ChunkBest {
        value: f64,
        designs: Vec<Vec<u8>>,
    }

    let chunk_results: Vec<Option<ChunkBest>> = starts
        .par_iter()
        .map(|&start| -> Result<Option<ChunkBest>> {
            let mut best: Option<ChunkBest> = None;
            for v in start..(start + CHUNK).min(end) {
                if !admissible[v.count_ones() as usize] {
                    continue;
                }
                let d = decode_design(v, n);
                let value = objective.evaluate(&d)?;
                match &mut best {
                    None => {
                        best = Some(ChunkBest {
                            value,
                            designs: vec![d],
                        })
                    }
                    Some(b) if direction.improves(value, b.value) => {
                        b.value = value;
                        b.designs.clear();
                        b.designs.push(d);
                    }
                    Some(b) if value == b.value => b.designs.push(d),
                    Some(_) => {}
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut overall: Option<ChunkBest> = None;
    for chunk in chunk_results.into_iter().flatten() {
        match &mut overall {
            None => overall = Some(chunk),
            Some(b) if direction.improves(chunk.value, b.value) => *b = chunk,
            Some(b) if chunk.value == b.value => b.designs.extend(chunk.designs),
            Some(_) => {}
        }
    }
    let best = overall.ok_or_else(|| Error::Infeasible {
        reason: "constraint admits no design".into(),
    })?;
    Ok(BruteForceResult {
        value: best.value,
        designs: best.designs,
    })
}

// ---------------------------------------------------------------------------
// Reference probability computations (independent of the production kernels)
// ---------------------------------------------------------------------------

/// R-function by explicit subset enumeration:
/// `R(k, A) = Σ_{B ⊆ A, |B| = k} Π_{i∈B} w_i`.
///
/// Exponential in `|A|`; intended as the ground-truth oracle at desk scale
/// (`|A| ≤ 24`).
#[must_use]
pub fn r_by_enumeration(k: usize, weights: &[f64]) -> f64 {
    let n = weights.len();
    assert!(
        n <= ENUMERATION_CAP,
        "oracle limited to {ENUMERATION_CAP} weights"
    );
    if k > n {
        return 0.0;
    }
    let mut total = 0.0;
    for v in 0u64..(1 << n) {
        if v.count_ones() as usize != k {
            continue;
        }
        let mut product = 1.0;
        for (i, w) in weights.iter().enumerate() {
            if (v >> i) & 1 == 1 {
                product *= w;
            }
        }
        total += product;
    }
    total
}

/// Probability of `design` under independent Bernoulli trials:
/// `Π_i p_i^{d_i} (1−p_i)^{1−d_i}`.
#[must_use]
pub fn bernoulli_pmf(p: &[f64], design: &[u8]) -> f64 {
    assert_eq!(p.len(), design.len());
    p.iter()
        .zip(design)
        .map(|(&pi, &d)| if d == 1 { pi } else { 1.0 - pi })
        .product()
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Which one-sided difference to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `(f(x + h e_i) − f(x)) / h`.
    Forward,
    /// `(f(x) − f(x − h e_i)) / h`.
    Backward,
}

/// Central difference quotient in coordinate `i`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// One-sided difference quotient in coordinate `i`.
pub fn one_sided_difference<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    i: usize,
    h: f64,
    side: Side,
) -> f64 {
    let mut shifted = x.to_vec();
    match side {
        Side::Forward => {
            shifted[i] += h;
            (f(&shifted) - f(x)) / h
        }
        Side::Backward => {
            shifted[i] -= h;
            (f(x) - f(&shifted)) / h
        }
    }
}

/// Full central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| central_difference(&f, x, i, h))
        .collect()
}

/// Mixed relative/absolute error `|a − b| / max(|a|, |b|, 1)`: relative for
/// quantities of magnitude above one, absolute below (so finite-difference
/// noise near a true zero is judged on its absolute size).
#[must_use]
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// One coordinate of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct FdEntry {
    /// Coordinate index.
    pub index: usize,
    /// The analytic derivative under test.
    pub analytic: f64,
    /// The difference-quotient estimate.
    pub estimate: f64,
    /// `relative_error(analytic, estimate)`.
    pub relative_error: f64,
}

/// Result of checking an analytic gradient against finite differences.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Per-coordinate details.
    pub entries: Vec<FdEntry>,
    /// Worst relative error across coordinates.
    pub max_relative_error: f64,
    /// The tolerance the report was judged against.
    pub tolerance: f64,
    /// `max_relative_error ≤ tolerance`.
    pub pass: bool,
}

fn build_report(entries: Vec<FdEntry>, tolerance: f64) -> FdReport {
    let max_relative_error = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    FdReport {
        pass: max_relative_error <= tolerance,
        entries,
        max_relative_error,
        tolerance,
    }
}

/// Checks `analytic` against central differences of `f` at `x`.
///
/// The point must be interior to `f`'s domain in every coordinate (use
/// [`finite_difference_check_boxed`] near box faces).
pub fn finite_difference_check<F: Fn(&[f64]) -> f64>(
    f: F,
    analytic: &[f64],
    x: &[f64],
    h: f64,
    tolerance: f64,
) -> FdReport {
    let entries = (0..x.len())
        .map(|i| {
            let estimate = central_difference(&f, x, i, h);
            FdEntry {
                index: i,
                analytic: analytic[i],
                estimate,
                relative_error: relative_error(analytic[i], estimate),
            }
        })
        .collect();
    build_report(entries, tolerance)
}

/// Like [`finite_difference_check`], but for a box domain `[lo, hi]^N`:
/// coordinates whose central stencil would leave the box fall back to the
/// inward one-sided quotient.
pub fn finite_difference_check_boxed<F: Fn(&[f64]) -> f64>(
    f: F,
    analytic: &[f64],
    x: &[f64],
    h: f64,
    tolerance: f64,
    lo: f64,
    hi: f64,
) -> FdReport {
    let entries = (0..x.len())
        .map(|i| {
            let estimate = if x[i] - h < lo {
                one_sided_difference(&f, x, i, h, Side::Forward)
            } else if x[i] + h > hi {
                one_sided_difference(&f, x, i, h, Side::Backward)
            } else {
                central_difference(&f, x, i, h)
            };
            FdEntry {
                index: i,
                analytic: analytic[i],
                estimate,
                relative_error: relative_error(analytic[i], estimate),
            }
        })
        .collect();
    build_report(entries, tolerance)
}

// ---------------------------------------------------------------------------
// Statistical helpers
// ---------------------------------------------------------------------------

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone)]
pub struct ChiSquareReport {
    /// Pearson statistic `Σ (observed − expected)² / expected`.
    pub statistic: f64,
    /// Degrees of freedom (`cells − 1`).
    pub dof: usize,
    /// Critical value at the requested significance.
    pub critical_value: f64,
    /// The significance level tested.
    pub significance: f64,
    /// `statistic ≤ critical_value`.
    pub pass: bool,
}

/// Pearson chi-square goodness-of-fit of observed counts against exact cell
/// probabilities.
///
/// # Errors
/// [`Error::DimensionMismatch`] on length disagreement;
/// [`Error::InvalidConfig`] for fewer than two cells, nonpositive expected
/// probabilities, or probabilities not summing to 1.
pub fn chi_square_gof(
    observed: &[u64],
    expected_probs: &[f64],
    significance: f64,
) -> Result<ChiSquareReport> {
    if observed.len() != expected_probs.len() {
        return Err(Error::DimensionMismatch {
            expected: expected_probs.len(),
            actual: observed.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::InvalidConfig {
            reason: "chi-square test needs at least two cells".into(),
        });
    }
    if expected_probs.iter().any(|&p| p.is_nan() || p <= 0.0) {
        return Err(Error::InvalidConfig {
            reason: "expected cell probabilities must be positive".into(),
        });
    }
    let total_prob: f64 = expected_probs.iter().sum();
    if (total_prob - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig {
            reason: format!("expected cell probabilities sum to {total_prob}, not 1"),
        });
    }
    let n: u64 = observed.iter().sum();
    let statistic = observed
        .iter()
        .zip(expected_probs)
        .map(|(&obs, &p)| {
            let expected = n as f64 * p;
            let delta = obs as f64 - expected;
            delta * delta / expected
        })
        .sum();
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidConfig {
        reason: format!("chi-square distribution: {e}"),
    })?;
    let critical_value = dist.inverse_cdf(1.0 - significance);
    Ok(ChiSquareReport {
        statistic,
        dof,
        critical_value,
        significance,
        pass: statistic <= critical_value,
    })
}

/// True when `sample_mean` lies within `k` standard errors of
/// `expected_mean`, given the per-sample variance.
#[must_use]
pub fn within_standard_errors(
    sample_mean: f64,
    expected_mean: f64,
    variance: f64,
    n_samples: usize,
    k: f64,
) -> bool {
    let se = (variance / n_samples as f64).sqrt();
    (sample_mean - expected_mean).abs() <= k * se
}
