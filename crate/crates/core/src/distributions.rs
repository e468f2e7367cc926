//! Poisson-binomial (PB), conditional Bernoulli (CB), and generalized
//! conditional Bernoulli (GCB) probability models.
//!
//! All three models are parameterized by a vector of success probabilities
//! `p ∈ [0,1]^N`. Entries exactly 0 or 1 (after snapping within a
//! configurable epsilon) are *degenerate*: they force the matching design
//! coordinate and are handled by exact boundary formulas rather than by
//! dividing by `1 − p`.
//!
//! With free (non-degenerate) index set `A`, forced-one set `I`, and
//! forced-zero set `O`:
//!
//! * **PB** — the law of the number of successes `z = ||d||_0`:
//!   `P(z) = R(z−|I|, A) · Π_{j∈A}(1−p_j)`, zero when `z < |I|` or
//!   `z > N−|O|`.
//! * **CB** — the law of the design conditioned on `||d||_0 = z`:
//!   `P(d|z) = Π_{j∈A} w_j^{d_j} / R(z−|I|, A)` for designs matching the
//!   degenerate coordinates with `Σ_{j∈A} d_j = z−|I|`, zero otherwise.
//! * **GCB** — CB conditioned on `||d||_0 ∈ Z`: the PB-weighted mixture
//!   `P(d|Z) = Σ_{z∈Z} P(d|z)P(z) / Σ_{z∈Z} P(z)`.
//!
//! Gradients are taken with respect to `p`. Non-degenerate coordinates use
//! the closed forms built from inclusion probabilities; degenerate
//! coordinates return the one-sided boundary derivatives (every branch is
//! validated against one-sided finite-difference limits in the tests).
//!
//! Long or extreme weight vectors switch the internal tabulations to log
//! space; the scale policy lives in the combinatorics module and is applied
//! per model at construction.

use std::sync::OnceLock;

use crate::combinatorics::{self, kernel, weights_from_probs, BernoulliWeights};
use crate::design;
use crate::error::Error;
use crate::oracle;
use crate::Result;

/// Default half-width of the snap interval around 0 and 1 inside which a
/// probability is classified as degenerate.
pub const DEGENERACY_EPSILON: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Success probabilities
// ---------------------------------------------------------------------------

/// A validated success-probability vector with its degeneracy classification.
///
/// Entries within the snap epsilon of 0 or 1 are snapped exactly to the
/// boundary at construction, so downstream code can test degeneracy by exact
/// comparison and the boundary formulas apply verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessProbabilities {
    p: Vec<f64>,
    zeros: Vec<usize>,
    ones: Vec<usize>,
    free: Vec<usize>,
}

impl SuccessProbabilities {
    /// Validates and classifies `p` with the default snap epsilon
    /// ([`DEGENERACY_EPSILON`]).
    ///
    /// # Errors
    /// [`Error::ProbabilityOutOfRange`] for entries outside `[0, 1]`
    /// (beyond the snap epsilon) or non-finite entries.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        Self::with_epsilon(p, DEGENERACY_EPSILON)
    }

    /// As [`SuccessProbabilities::new`] with a caller-chosen snap epsilon in
    /// `[0, 0.5)`.
    ///
    /// # Errors
    /// [`Error::Domain`] for an epsilon outside `[0, 0.5)`;
    /// [`Error::ProbabilityOutOfRange`] as in [`SuccessProbabilities::new`].
    pub fn with_epsilon(mut p: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::Domain {
                reason: format!("snap epsilon must lie in [0, 0.5), got {epsilon}"),
            });
        }
        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        let mut free = Vec::new();
        for (i, value) in p.iter_mut().enumerate() {
            if !value.is_finite() || *value < -epsilon || *value > 1.0 + epsilon {
                return Err(Error::ProbabilityOutOfRange {
                    index: i,
                    value: *value,
                });
            }
            if *value <= epsilon {
                *value = 0.0;
                zeros.push(i);
            } else if *value >= 1.0 - epsilon {
                *value = 1.0;
                ones.push(i);
            } else {
                free.push(i);
            }
        }
        Ok(SuccessProbabilities {
            p,
            zeros,
            ones,
            free,
        })
    }

    /// Number of trials `N`.
    #[must_use]
    pub fn len(&self) -> usize {
        self.p.len()
    }

    /// True for an empty vector.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// The (snapped) probability values.
    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// Indices forced inactive (`p_i = 0`), ascending.
    #[must_use]
    pub fn zeros(&self) -> &[usize] {
        &self.zeros
    }

    /// Indices forced active (`p_i = 1`), ascending.
    #[must_use]
    pub fn ones(&self) -> &[usize] {
        &self.ones
    }

    /// Non-degenerate indices, ascending.
    #[must_use]
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// True when `p_i` is exactly 0 or 1.
    #[must_use]
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.p[i] == 0.0 || self.p[i] == 1.0
    }
}

// ---------------------------------------------------------------------------
// Shared scale-aware R column
// ---------------------------------------------------------------------------

/// `R(0..=kmax, A)` in the scale the model operates in.
#[derive(Debug, Clone)]
enum RColumn {
    Linear(Vec<f64>),
    Log(Vec<f64>),
}

impl RColumn {
    fn build(kmax: usize, weights: &BernoulliWeights) -> Self {
        if weights.uses_log_scale() {
            RColumn::Log(kernel::r_all_log(kmax, &weights.log_values(), &[]))
        } else {
            RColumn::Linear(kernel::r_all(kmax, weights.values(), &[]))
        }
    }

    /// `R(k)` as a linear value; zero outside the tabulated range (which
    /// covers exactly the arities where `R` can be nonzero).
    fn value_at(&self, k: i64) -> f64 {
        match self {
            RColumn::Linear(r) => usize::try_from(k)
                .ok()
                .and_then(|k| r.get(k).copied())
                .unwrap_or(0.0),
            RColumn::Log(r) => usize::try_from(k)
                .ok()
                .and_then(|k| r.get(k).copied())
                .map_or(0.0, f64::exp),
        }
    }

    /// `R(num)/R(den)`; `den` must index a positive tabulated value.
    fn ratio(&self, num: i64, den: i64) -> f64 {
        match self {
            RColumn::Linear(r) => {
                let num = usize::try_from(num)
                    .ok()
                    .and_then(|k| r.get(k).copied())
                    .unwrap_or(0.0);
                num / r[usize::try_from(den).expect("denominator arity is in range")]
            }
            RColumn::Log(r) => {
                let den = r[usize::try_from(den).expect("denominator arity is in range")];
                usize::try_from(num)
                    .ok()
                    .and_then(|k| r.get(k).copied())
                    .map_or(0.0, |n| (n - den).exp())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Poisson-binomial model
// ---------------------------------------------------------------------------

/// The Poisson-binomial model: the law of the success count
/// `z = ||d||_0` under independent trials with probabilities `p`.
#[derive(Debug, Clone)]
pub struct PBModel {
    probs: SuccessProbabilities,
    weights: BernoulliWeights,
    /// `R(0..=|A|, A)` in the active scale.
    r_col: RColumn,
    /// `Π_{j∈A} (1−p_j)` (linear scale; used only when `r_col` is linear).
    prod_q: f64,
    /// `Σ_{j∈A} ln(1−p_j)`.
    log_prod_q: f64,
}

impl PBModel {
    /// Builds the model (tabulates the full R column once).
    #[must_use]
    pub fn new(probs: SuccessProbabilities) -> Self {
        let weights = weights_from_probs(&probs);
        let r_col = RColumn::build(weights.len(), &weights);
        let (mut prod_q, mut log_prod_q) = (1.0, 0.0);
        for &i in probs.free() {
            let q = 1.0 - probs.values()[i];
            prod_q *= q;
            log_prod_q += q.ln();
        }
        PBModel {
            probs,
            weights,
            r_col,
            prod_q,
            log_prod_q,
        }
    }

    /// The parameter vector.
    #[must_use]
    pub fn probs(&self) -> &SuccessProbabilities {
        &self.probs
    }

    /// Number of trials.
    #[must_use]
    pub fn dimension(&self) -> usize {
        self.probs.len()
    }

    /// Count offset into the free set: `z′ = z − |I|` (negative when the
    /// forced-one entries already exceed `z`).
    fn z_free(&self, z: usize) -> i64 {
        z as i64 - self.probs.ones().len() as i64
    }

    /// `R(k, A) · Π_{j∈A}(1−p_j)` evaluated scale-faithfully.
    fn weighted_r(&self, k: i64) -> f64 {
        match &self.r_col {
            RColumn::Linear(_) => self.r_col.value_at(k) * self.prod_q,
            RColumn::Log(r) => usize::try_from(k)
                .ok()
                .and_then(|k| r.get(k).copied())
                .map_or(0.0, |lr| (lr + self.log_prod_q).exp()),
        }
    }

    /// One-sided boundary partial `∂P(z)/∂p_i` at a degenerate coordinate:
    /// `(R(k*−1, A) − R(k*, A)) · Π_{j∈A}(1−p_j)` with
    /// `k* = z − |I∖{i}|`. `P(z; p_i)` is affine in each `p_i`, so the two
    /// one-sided limits coincide and the formula is exact.
    fn degenerate_partial(&self, i: usize, z: usize) -> f64 {
        let ones_without_i =
            self.probs.ones().len() as i64 - i64::from(self.probs.values()[i] == 1.0);
        let k_star = z as i64 - ones_without_i;
        self.weighted_r(k_star - 1) - self.weighted_r(k_star)
    }
}

/// `P(||d||_0 = z)` under the PB model; zero outside the attainable range
/// `|I| ≤ z ≤ N − |O|`.
#[must_use]
pub fn pb_pmf(model: &PBModel, z: usize) -> f64 {
    if z > model.dimension() {
        return 0.0;
    }
    model.weighted_r(model.z_free(z))
}

/// The full PMF over `z = 0..=N`.
#[must_use]
pub fn pb_pmf_all(model: &PBModel) -> Vec<f64> {
    (0..=model.dimension()).map(|z| pb_pmf(model, z)).collect()
}

/// `∇_p P(z)` via the tabulated R-gradient: non-degenerate coordinate `i`
/// contributes `P(z)·[(1+w_i)² ∂log R/∂w_i − (1+w_i)]`; degenerate
/// coordinates use the boundary formula
/// `(R(k*−1, A) − R(k*, A))·Π_{j∈A}(1−p_j)` with `k* = z − |I∖{i}|`.
#[must_use]
pub fn pb_grad(model: &PBModel, z: usize) -> Vec<f64> {
    let a = model.weights.len();
    let z_free = model.z_free(z);
    let free_ratios: Option<Vec<f64>> = if (0..=a as i64).contains(&z_free) {
        // ∂R/∂w_i / R at arity z′, computed in the model's scale.
        let k = z_free as usize;
        Some(if model.weights.uses_log_scale() {
            let (log_r, log_g) = kernel::r_gradient_log(k, &model.weights.log_values());
            log_g.iter().map(|lg| (lg - log_r[k]).exp()).collect()
        } else {
            let (r, g) = kernel::r_gradient(k, model.weights.values());
            g.iter().map(|gi| gi / r[k]).collect()
        })
    } else {
        None
    };
    pb_grad_common(model, z, free_ratios.as_deref())
}

/// `∇_p P(z)` via the inclusion-probability route: the free-coordinate
/// ratio `∂log R/∂w_i` is `π_i(z′)/w_i` instead of a gradient
/// co-tabulation. Agrees with [`pb_grad`] to roundoff.
#[must_use]
pub fn pb_grad_via_inclusion(model: &PBModel, z: usize) -> Vec<f64> {
    let a = model.weights.len();
    let z_free = model.z_free(z);
    let free_ratios: Option<Vec<f64>> = if (0..=a as i64).contains(&z_free) {
        let pi = combinatorics::inclusion_first(z_free as usize, &model.weights)
            .expect("z′ ≤ |A| was checked");
        Some(
            pi.first_order
                .iter()
                .zip(model.weights.values())
                .map(|(&pi_i, &w_i)| pi_i / w_i)
                .collect(),
        )
    } else {
        None
    };
    pb_grad_common(model, z, free_ratios.as_deref())
}

/// Assembles the PB gradient from per-slot values of `∂log R(z′)/∂w` (or
/// `None` when `z′` is outside `[0, |A|]`, where the PMF vanishes
/// identically under free-coordinate perturbations).
fn pb_grad_common(model: &PBModel, z: usize, free_ratios: Option<&[f64]>) -> Vec<f64> {
    let n = model.dimension();
    let mut grad = vec![0.0; n];
    if let Some(ratios) = free_ratios {
        let p = pb_pmf(model, z);
        for (slot, &i) in model.weights.index_map().iter().enumerate() {
            let w = model.weights.values()[slot];
            grad[i] = p * ((1.0 + w) * (1.0 + w) * ratios[slot] - (1.0 + w));
        }
    }
    for &i in model.probs.zeros().iter().chain(model.probs.ones()) {
        grad[i] = model.degenerate_partial(i, z);
    }
    grad
}

// ---------------------------------------------------------------------------
// Conditional Bernoulli model
// ---------------------------------------------------------------------------

/// The conditional Bernoulli model: the law of the design `d` conditioned
/// on `||d||_0 = z`.
#[derive(Debug, Clone)]
pub struct CBModel {
    probs: SuccessProbabilities,
    z: usize,
    weights: BernoulliWeights,
    /// `z − |I|`: the number of ones carried by the free coordinates.
    z_free: usize,
    /// `R(0..=z′+1, A)` — one row above the normalizer for the boundary
    /// derivative ratios.
    r_col: RColumn,
    /// First-order inclusion probabilities at `z′` per weight slot (lazy).
    pi: OnceLock<Vec<f64>>,
}

impl CBModel {
    /// Builds the model for budget `z`.
    ///
    /// # Errors
    /// [`Error::Infeasible`] when the conditioned event has probability
    /// zero: `z < |I|` or `z − |I| > N − |I| − |O|`.
    pub fn new(probs: SuccessProbabilities, z: usize) -> Result<Self> {
        let ones = probs.ones().len();
        let free = probs.free().len();
        if z < ones || z - ones > free {
            return Err(Error::Infeasible {
                reason: format!(
                    "budget z = {z} is unattainable with {ones} forced-one and {free} free \
                     coordinates (attainable range [{ones}, {}])",
                    ones + free
                ),
            });
        }
        let weights = weights_from_probs(&probs);
        let z_free = z - ones;
        let r_col = RColumn::build(z_free + 1, &weights);
        Ok(CBModel {
            probs,
            z,
            weights,
            z_free,
            r_col,
            pi: OnceLock::new(),
        })
    }

    /// The parameter vector.
    #[must_use]
    pub fn probs(&self) -> &SuccessProbabilities {
        &self.probs
    }

    /// The conditioning budget.
    #[must_use]
    pub fn z(&self) -> usize {
        self.z
    }

    /// Number of trials.
    #[must_use]
    pub fn dimension(&self) -> usize {
        self.probs.len()
    }

    /// The weights of the free coordinates.
    #[must_use]
    pub fn weights(&self) -> &BernoulliWeights {
        &self.weights
    }

    /// Ones to be placed among the free coordinates: `z′ = z − |I|`.
    #[must_use]
    pub fn z_free(&self) -> usize {
        self.z_free
    }

    /// First-order inclusion probabilities `π_i(z′)` per weight slot,
    /// computed once per model.
    #[must_use]
    pub fn pi(&self) -> &[f64] {
        self.pi.get_or_init(|| {
            combinatorics::inclusion_first(self.z_free, &self.weights)
                .expect("z′ ≤ |A| is a construction invariant")
                .first_order
        })
    }

    fn check_dimension(&self, d: &[u8]) -> Result<()> {
        design::validate_design(d)?;
        if d.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: d.len(),
            });
        }
        Ok(())
    }

    /// Degenerate coordinates of `d` that disagree with their forced value.
    fn degenerate_mismatches(&self, d: &[u8]) -> Vec<usize> {
        let mut out = Vec::new();
        for &i in self.probs.zeros() {
            if d[i] == 1 {
                out.push(i);
            }
        }
        for &i in self.probs.ones() {
            if d[i] == 0 {
                out.push(i);
            }
        }
        out
    }

    /// `Π_{j∈A} w_j^{d_j} / R(z′, A)` in the model's scale (assumes `d`
    /// matches the degenerate coordinates and has `||d||_0 = z`).
    fn matched_pmf(&self, d: &[u8]) -> f64 {
        match &self.r_col {
            RColumn::Linear(r) => {
                let mut num = 1.0;
                for (slot, &i) in self.weights.index_map().iter().enumerate() {
                    if d[i] == 1 {
                        num *= self.weights.values()[slot];
                    }
                }
                num / r[self.z_free]
            }
            RColumn::Log(r) => {
                let mut log_num = 0.0;
                let logw = self.weights.log_values();
                for (slot, &i) in self.weights.index_map().iter().enumerate() {
                    if d[i] == 1 {
                        log_num += logw[slot];
                    }
                }
                (log_num - r[self.z_free]).exp()
            }
        }
    }
}

/// `P(d | ||d||_0 = z)`: zero when `||d||_0 ≠ z` or `d` disagrees with a
/// degenerate coordinate, else `Π_{j∈A} w_j^{d_j} / R(z−|I|, A)`.
///
/// # Errors
/// [`Error::DimensionMismatch`] / [`Error::Domain`] for a malformed design.
pub fn cb_pmf(model: &CBModel, d: &[u8]) -> Result<f64> {
    model.check_dimension(d)?;
    if design::popcount(d) != model.z || !model.degenerate_mismatches(d).is_empty() {
        return Ok(0.0);
    }
    Ok(model.matched_pmf(d))
}

/// `∇_p log P(d|z)`.
///
/// Non-degenerate coordinate `i`: `((1+w_i)²/w_i)(d_i − π_i)`. Degenerate
/// coordinates return the one-sided boundary derivatives
/// `−R(z′−1, A)/R(z′, A)` at `p_i = 0` and `+R(z′+1, A)/R(z′, A)` at
/// `p_i = 1`.
///
/// # Errors
/// [`Error::Domain`] when `cb_pmf(model, d) = 0` (the log-gradient is
/// undefined); dimension errors as [`cb_pmf`].
pub fn cb_log_grad(model: &CBModel, d: &[u8]) -> Result<Vec<f64>> {
    model.check_dimension(d)?;
    if design::popcount(d) != model.z || !model.degenerate_mismatches(d).is_empty() {
        return Err(Error::Domain {
            reason: "log-gradient requested at a design with zero probability".to_string(),
        });
    }
    let n = model.dimension();
    let z_free = model.z_free as i64;
    let mut grad = vec![0.0; n];
    let pi = model.pi();
    for (slot, &i) in model.weights.index_map().iter().enumerate() {
        let w = model.weights.values()[slot];
        grad[i] = (1.0 + w) * (1.0 + w) / w * (f64::from(d[i]) - pi[slot]);
    }
    for &i in model.probs.zeros() {
        grad[i] = -model.r_col.ratio(z_free - 1, z_free);
    }
    for &i in model.probs.ones() {
        grad[i] = model.r_col.ratio(z_free + 1, z_free);
    }
    Ok(grad)
}

/// `∇_p P(d|z)` — defined for every design, including those the PMF
/// vanishes on:
///
/// * `||d||_0 ≠ z` → zero vector (the PMF is identically zero nearby);
/// * two or more degenerate mismatches → zero vector;
/// * exactly one mismatch at `i` → only entry `i` is nonzero, with the
///   one-sided value `± Π_{j∈A} w_j^{d_j} / R(z′, A)` (`+` at `p_i = 0`
///   with `d_i = 1`, `−` at `p_i = 1` with `d_i = 0`);
/// * no mismatches → `P(d|z) · ∇_p log P(d|z)`.
///
/// # Errors
/// Dimension errors as [`cb_pmf`].
pub fn cb_pmf_grad(model: &CBModel, d: &[u8]) -> Result<Vec<f64>> {
    model.check_dimension(d)?;
    let n = model.dimension();
    if design::popcount(d) != model.z {
        return Ok(vec![0.0; n]);
    }
    let mismatches = model.degenerate_mismatches(d);
    match mismatches.len() {
        0 => {
            let p = model.matched_pmf(d);
            let log_grad = cb_log_grad(model, d)?;
            Ok(log_grad.into_iter().map(|g| p * g).collect())
        }
        1 => {
            let i = mismatches[0];
            let magnitude = model.matched_pmf(d);
            let mut grad = vec![0.0; n];
            grad[i] = if model.probs.values()[i] == 0.0 {
                magnitude
            } else {
                -magnitude
            };
            Ok(grad)
        }
        _ => Ok(vec![0.0; n]),
    }
}

/// One entry of the CB Hessians: both `∂²log P/∂p_i∂p_j` and
/// `∂²P/∂p_i∂p_j` closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianEntry {
    /// `∂² log P(d|z) / ∂p_i ∂p_j`.
    pub log_pmf: f64,
    /// `∂² P(d|z) / ∂p_i ∂p_j`.
    pub pmf: f64,
}

/// Hessian entries of the CB model at a feasible design (non-degenerate
/// `p` only).
///
/// With `a_i = (1+w_i)²/w_i` and score `s_i = a_i (d_i − π_i)`:
///
/// * diagonal: `∂²log P/∂p_i² = a_i² [ (w_i²−1)/(1+w_i)² · (d_i − π_i) +
///   (π_i² − π_i) ]`;
/// * off-diagonal: `∂²log P/∂p_i∂p_j = a_i a_j (π_i π_j − π_{i,j})`;
/// * `∂²P/∂p_i∂p_j = P · (∂²log P/∂p_i∂p_j + s_i s_j)`.
///
/// # Errors
/// [`Error::Domain`] when `p` has degenerate entries or the design has zero
/// probability; index/dimension errors otherwise.
pub fn cb_hessian_entry(model: &CBModel, d: &[u8], i: usize, j: usize) -> Result<HessianEntry> {
    model.check_dimension(d)?;
    let n = model.dimension();
    if i >= n || j >= n {
        return Err(Error::Domain {
            reason: format!("Hessian index out of range: ({i}, {j}) with N = {n}"),
        });
    }
    if model.weights.len() != n {
        return Err(Error::Domain {
            reason: "Hessian entries require a fully non-degenerate probability vector".to_string(),
        });
    }
    if design::popcount(d) != model.z {
        return Err(Error::Domain {
            reason: "Hessian requested at a design with zero probability".to_string(),
        });
    }
    let w = model.weights.values();
    let pi = model.pi();
    let a_i = (1.0 + w[i]) * (1.0 + w[i]) / w[i];
    let a_j = (1.0 + w[j]) * (1.0 + w[j]) / w[j];
    let log_pmf = if i == j {
        let slope = (w[i] * w[i] - 1.0) / ((1.0 + w[i]) * (1.0 + w[i]));
        a_i * a_i * (slope * (f64::from(d[i]) - pi[i]) + (pi[i] * pi[i] - pi[i]))
    } else {
        let pi_ij = combinatorics::inclusion_second(model.z, &model.weights, i, j)?;
        a_i * a_j * (pi[i] * pi[j] - pi_ij)
    };
    let p = model.matched_pmf(d);
    let s_i = a_i * (f64::from(d[i]) - pi[i]);
    let s_j = a_j * (f64::from(d[j]) - pi[j]);
    Ok(HessianEntry {
        log_pmf,
        pmf: p * (log_pmf + s_i * s_j),
    })
}

/// First and second moments of a CB model, plus the total score variance.
#[derive(Debug, Clone)]
pub struct CBMoments {
    /// `E[d_i]`: `π_i` on free coordinates, the forced value on degenerate
    /// ones.
    pub mean: Vec<f64>,
    /// `Cov[d_i, d_j]`: `π_i − π_i²` on the free diagonal,
    /// `π_{i,j} − π_i π_j` off it; zero in any degenerate row/column.
    pub covariance: Vec<Vec<f64>>,
    /// `Σ_i Var[∂ log P/∂p_i] = Σ_{i free} ((1+w_i)⁴/w_i²)(π_i − π_i²)`.
    pub score_variance: f64,
}

/// Exact moments of the CB model (the covariance costs `O(N²)` R-table
/// builds — a desk-scale verification aid; use [`cb_score_variance`] alone
/// on hot paths).
///
/// # Errors
/// Propagates inclusion-probability domain errors (cannot occur for a
/// feasibly constructed model).
pub fn cb_moments(model: &CBModel) -> Result<CBMoments> {
    let n = model.dimension();
    let pi = model.pi();
    let mut mean = vec![0.0; n];
    for &i in model.probs.ones() {
        mean[i] = 1.0;
    }
    for (slot, &i) in model.weights.index_map().iter().enumerate() {
        mean[i] = pi[slot];
    }
    let mut covariance = vec![vec![0.0; n]; n];
    let slots = model.weights.index_map();
    for (slot_a, &i) in slots.iter().enumerate() {
        covariance[i][i] = pi[slot_a] - pi[slot_a] * pi[slot_a];
        for (slot_b, &j) in slots.iter().enumerate().skip(slot_a + 1) {
            let pi_ij =
                combinatorics::inclusion_second(model.z_free, &model.weights, slot_a, slot_b)?;
            let cov = pi_ij - pi[slot_a] * pi[slot_b];
            covariance[i][j] = cov;
            covariance[j][i] = cov;
        }
    }
    Ok(CBMoments {
        mean,
        covariance,
        score_variance: cb_score_variance(model),
    })
}

/// Total variance of the score `∇_p log P(d|z)` over the free coordinates
/// (cheap: uses the cached first-order inclusion probabilities).
#[must_use]
pub fn cb_score_variance(model: &CBModel) -> f64 {
    model
        .pi()
        .iter()
        .zip(model.weights.values())
        .map(|(&pi_i, &w_i)| {
            let a = (1.0 + w_i) * (1.0 + w_i) / w_i;
            a * a * (pi_i - pi_i * pi_i)
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Generalized conditional Bernoulli model
// ---------------------------------------------------------------------------

/// The generalized conditional Bernoulli model: the design law conditioned
/// on `||d||_0 ∈ Z`, a PB-weighted mixture of CB models.
#[derive(Debug, Clone)]
pub struct GCBModel {
    probs: SuccessProbabilities,
    budgets: Vec<usize>,
    pb: PBModel,
    /// `P(z)` for each budget, in `budgets` order.
    pb_values: Vec<f64>,
    /// `Σ_{z∈Z} P(z)`.
    pb_total: f64,
    /// Per-budget CB models; `None` where `P(z) = 0` (those mixture terms
    /// vanish identically).
    cb_models: Vec<Option<CBModel>>,
    /// `∇_p P(z)` per budget (lazy).
    pb_grads: OnceLock<Vec<Vec<f64>>>,
    /// `Σ_{z∈Z} ∇_p P(z)` (lazy).
    pb_grad_sum: OnceLock<Vec<f64>>,
}

impl GCBModel {
    /// Builds the model over the budget set `Z` (deduplicated and sorted).
    ///
    /// # Errors
    /// [`Error::Domain`] for an empty budget set or a budget above `N`;
    /// [`Error::Infeasible`] when every `z ∈ Z` has zero PB probability.
    pub fn new(probs: SuccessProbabilities, budgets: Vec<usize>) -> Result<Self> {
        let n = probs.len();
        let mut budgets = budgets;
        budgets.sort_unstable();
        budgets.dedup();
        if budgets.is_empty() {
            return Err(Error::Domain {
                reason: "budget set must be nonempty".to_string(),
            });
        }
        if let Some(&bad) = budgets.iter().find(|&&z| z > n) {
            return Err(Error::Domain {
                reason: format!("budget {bad} exceeds the number of trials {n}"),
            });
        }
        let pb = PBModel::new(probs.clone());
        let pb_values: Vec<f64> = budgets.iter().map(|&z| pb_pmf(&pb, z)).collect();
        let pb_total: f64 = pb_values.iter().sum();
        if pb_total <= 0.0 {
            return Err(Error::Infeasible {
                reason: format!(
                    "every budget in {budgets:?} has zero probability under the success \
                     probabilities"
                ),
            });
        }
        let cb_models = budgets
            .iter()
            .zip(&pb_values)
            .map(|(&z, &pz)| {
                if pz > 0.0 {
                    CBModel::new(probs.clone(), z).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GCBModel {
            probs,
            budgets,
            pb,
            pb_values,
            pb_total,
            cb_models,
            pb_grads: OnceLock::new(),
            pb_grad_sum: OnceLock::new(),
        })
    }

    /// The parameter vector.
    #[must_use]
    pub fn probs(&self) -> &SuccessProbabilities {
        &self.probs
    }

    /// Number of trials.
    #[must_use]
    pub fn dimension(&self) -> usize {
        self.probs.len()
    }

    /// The sorted, deduplicated budget set `Z`.
    #[must_use]
    pub fn budgets(&self) -> &[usize] {
        &self.budgets
    }

    /// `P(z)` per budget, aligned with [`GCBModel::budgets`].
    #[must_use]
    pub fn pb_values(&self) -> &[f64] {
        &self.pb_values
    }

    /// `Σ_{z∈Z} P(z)`.
    #[must_use]
    pub fn pb_total(&self) -> f64 {
        self.pb_total
    }

    /// The CB mixture component at budget position `k` (`None` where the
    /// PB weight is zero).
    #[must_use]
    pub fn cb_component(&self, k: usize) -> Option<&CBModel> {
        self.cb_models[k].as_ref()
    }

    /// The underlying PB model.
    #[must_use]
    pub fn pb_model(&self) -> &PBModel {
        &self.pb
    }

    fn pb_grads(&self) -> &[Vec<f64>] {
        self.pb_grads
            .get_or_init(|| self.budgets.iter().map(|&z| pb_grad(&self.pb, z)).collect())
    }

    fn pb_grad_sum(&self) -> &[f64] {
        self.pb_grad_sum.get_or_init(|| {
            let mut sum = vec![0.0; self.dimension()];
            for g in self.pb_grads() {
                for (s, gi) in sum.iter_mut().zip(g) {
                    *s += gi;
                }
            }
            sum
        })
    }
}

/// `P(d | ||d||_0 ∈ Z) = Σ_{z∈Z} P(d|z) P(z) / Σ_{z∈Z} P(z)`.
///
/// With a single feasible mixture component the CB PMF is returned directly
/// (the collapsed form of the same expression).
///
/// # Errors
/// Dimension errors as [`cb_pmf`].
pub fn gcb_pmf(model: &GCBModel, d: &[u8]) -> Result<f64> {
    let feasible: Vec<usize> = (0..model.budgets.len())
        .filter(|&k| model.pb_values[k] > 0.0)
        .collect();
    if let [only] = feasible[..] {
        return cb_pmf(
            model.cb_models[only].as_ref().expect("feasible component"),
            d,
        );
    }
    let mut acc = 0.0;
    for k in feasible {
        let cb = model.cb_models[k].as_ref().expect("feasible component");
        acc += cb_pmf(cb, d)? * model.pb_values[k];
    }
    Ok(acc / model.pb_total)
}

/// `∇_p log P(d|Z)` by the mixture quotient rule:
///
/// ```text
/// Σ_z [P(d|z) ∇P(z) + P(z) ∇P(d|z)] / Σ_z P(d|z)P(z)  −  Σ_z ∇P(z) / Σ_z P(z)
/// ```
///
/// # Errors
/// [`Error::Domain`] when `gcb_pmf(model, d) = 0`; dimension errors as
/// [`cb_pmf`].
pub fn gcb_log_grad(model: &GCBModel, d: &[u8]) -> Result<Vec<f64>> {
    let n = model.dimension();
    let mut numerator = vec![0.0; n];
    let mut mixture_mass = 0.0;
    let pb_grads = model.pb_grads();
    for ((maybe_cb, &pz), pb_g) in model.cb_models.iter().zip(&model.pb_values).zip(pb_grads) {
        let Some(cb) = maybe_cb.as_ref() else {
            continue;
        };
        let cb_p = cb_pmf(cb, d)?;
        let cb_g = cb_pmf_grad(cb, d)?;
        mixture_mass += cb_p * pz;
        for i in 0..n {
            numerator[i] += cb_p * pb_g[i] + pz * cb_g[i];
        }
    }
    if mixture_mass <= 0.0 {
        return Err(Error::Domain {
            reason: "log-gradient requested at a design with zero probability".to_string(),
        });
    }
    let grad_sum = model.pb_grad_sum();
    Ok((0..n)
        .map(|i| numerator[i] / mixture_mass - grad_sum[i] / model.pb_total)
        .collect())
}

/// `E[f(d) | ||d||_0 ∈ Z] = Σ_z E[f|z] P(z) / Σ_z P(z)` by exhaustive
/// enumeration — a desk-scale testing aid.
///
/// # Errors
/// [`Error::EnumerationCap`] beyond the enumeration cap; design errors from
/// `f`'s domain are not possible (only feasible designs are generated).
pub fn gcb_expectation<F: Fn(&[u8]) -> f64>(model: &GCBModel, f: F) -> Result<f64> {
    let per_budget = per_budget_expectations(model, |d| f(d))?;
    let mut acc = 0.0;
    for (k, (e1, _)) in per_budget.iter().enumerate() {
        acc += e1 * model.pb_values[k];
    }
    Ok(acc / model.pb_total)
}

/// `Var[f(d) | ||d||_0 ∈ Z]` per the mixture identity
/// `Σ_z E[f²|z]P(z)/ΣP − Σ_z Σ_{z'} E[f|z]E[f|z']P(z)P(z')/(ΣP)²` —
/// exhaustive, desk-scale.
///
/// # Errors
/// As [`gcb_expectation`].
pub fn gcb_variance<F: Fn(&[u8]) -> f64>(model: &GCBModel, f: F) -> Result<f64> {
    let per_budget = per_budget_expectations(model, |d| f(d))?;
    let mut second = 0.0;
    for (k, (_, e2)) in per_budget.iter().enumerate() {
        second += e2 * model.pb_values[k];
    }
    second /= model.pb_total;
    let mut mean_sq = 0.0;
    for (k, (e1_k, _)) in per_budget.iter().enumerate() {
        for (l, (e1_l, _)) in per_budget.iter().enumerate() {
            mean_sq += e1_k * e1_l * model.pb_values[k] * model.pb_values[l];
        }
    }
    mean_sq /= model.pb_total * model.pb_total;
    Ok(second - mean_sq)
}

/// `(E[f|z], E[f²|z])` for each budget (zero where the PB weight is zero).
fn per_budget_expectations<F: Fn(&[u8]) -> f64>(model: &GCBModel, f: F) -> Result<Vec<(f64, f64)>> {
    use crate::optimizer::ConstraintSpec;
    let n = model.dimension();
    let mut out = Vec::with_capacity(model.budgets.len());
    for k in 0..model.budgets.len() {
        let Some(cb) = model.cb_models[k].as_ref() else {
            out.push((0.0, 0.0));
            continue;
        };
        let constraint = ConstraintSpec::equality(model.budgets[k]);
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for d in oracle::FeasibleEnumeration::new(&constraint, n)? {
            let p = cb_pmf(cb, &d)?;
            if p == 0.0 {
                continue;
            }
            let value = f(&d);
            e1 += value * p;
            e2 += value * value * p;
        }
        out.push((e1, e2));
    }
    Ok(out)
}
