//! Bernoulli weights, the R-function, and inclusion probabilities.
//!
//! The R-function is the elementary symmetric polynomial in a set of
//! Bernoulli weights `w_i = p_i/(1−p_i)`:
//!
//! ```text
//! R(k, A) = Σ_{B ⊆ A, |B| = k} Π_{i∈B} w_i,    R(0, A) = 1,
//! R(k, A) = 0 for k > |A|.
//! ```
//!
//! It normalizes the conditional Bernoulli family and carries all of its
//! moment structure: the first-order inclusion probabilities are
//! `π_i = w_i R(z−1, A∖{i}) / R(z, A)` and the second-order ones
//! `π_{i,j} = w_i w_j R(z−2, A∖{i,j}) / R(z, A)`.
//!
//! Production evaluation uses the numerically benign two-term tabulation
//! `c(n,j) = c(n,j−1) + w_j · c(n−1,j−1)` (all cells nonnegative — no
//! cancellation), rolled in place so a value query needs one row of memory.
//! Gradients co-tabulate in the same pass via
//! `c′(n,j) = c′(n,j−1) + w_j·c′(n−1,j−1) + c(n−1,j−1)·e_j`. When the
//! weight vector is long or its entries extreme, the same recurrences run in
//! log space (log-sum-exp of nonnegative terms, equally cancellation-free).
//! The alternating power-sum recurrence is provided only as a cross-check
//! oracle ([`r_value_power_sum`]) because it is numerically unstable.
//!
//! Set-difference values such as `R(z−1, A∖{i})` are obtained by fresh
//! tabulations over the reduced index sequence — never by downdating a full
//! tabulation, which is unstable.

use rayon::prelude::*;

use crate::distributions::SuccessProbabilities;
use crate::error::Error;
use crate::Result;

// ---------------------------------------------------------------------------
// Kernels (shared with the distribution and sampling modules)
// ---------------------------------------------------------------------------

pub(crate) mod kernel {
    /// Beyond this many weights the tabulations run in log space.
    const LOG_SCALE_MAX_LEN: usize = 64;
    /// Weight spread `max/min` beyond which log space is used.
    const LOG_SCALE_MAX_RATIO: f64 = 1e8;
    /// Absolute weight magnitude triggers (a uniformly huge or tiny weight
    /// vector can overflow/underflow without tripping the ratio rule).
    const LOG_SCALE_MAX_ABS: f64 = 1e6;
    const LOG_SCALE_MIN_ABS: f64 = 1e-6;

    /// Scale policy: log-space tabulation for long or extreme weight vectors.
    pub(crate) fn use_log_scale(w: &[f64]) -> bool {
        if w.len() > LOG_SCALE_MAX_LEN {
            return true;
        }
        if w.is_empty() {
            return false;
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &x in w {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        hi / lo > LOG_SCALE_MAX_RATIO || hi > LOG_SCALE_MAX_ABS || lo < LOG_SCALE_MIN_ABS
    }

    /// `log(exp(a) + exp(b))` without overflow; `−∞` is the additive zero.
    pub(crate) fn logaddexp(a: f64, b: f64) -> f64 {
        if a == f64::NEG_INFINITY {
            return b;
        }
        if b == f64::NEG_INFINITY {
            return a;
        }
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        hi + (lo - hi).exp().ln_1p()
    }

    /// `R(0..=kmax, A ∖ skip)` by the in-place two-term recurrence.
    pub(crate) fn r_all(kmax: usize, w: &[f64], skip: &[usize]) -> Vec<f64> {
        let mut r = vec![0.0; kmax + 1];
        r[0] = 1.0;
        for (j, &wj) in w.iter().enumerate() {
            if skip.contains(&j) {
                continue;
            }
            for n in (1..=kmax).rev() {
                r[n] += wj * r[n - 1];
            }
        }
        r
    }

    /// `log R(0..=kmax, A ∖ skip)` from log-weights.
    pub(crate) fn r_all_log(kmax: usize, logw: &[f64], skip: &[usize]) -> Vec<f64> {
        let mut r = vec![f64::NEG_INFINITY; kmax + 1];
        r[0] = 0.0;
        for (j, &lwj) in logw.iter().enumerate() {
            if skip.contains(&j) {
                continue;
            }
            for n in (1..=kmax).rev() {
                r[n] = logaddexp(r[n], lwj + r[n - 1]);
            }
        }
        r
    }

    /// `(R(0..=k), ∂R(k)/∂w)` with the gradient co-tabulated in the same
    /// pass. Every cell is nonnegative.
    pub(crate) fn r_gradient(k: usize, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n_w = w.len();
        let mut r = vec![0.0; k + 1];
        r[0] = 1.0;
        let mut g = vec![vec![0.0; n_w]; k + 1];
        for (j, &wj) in w.iter().enumerate() {
            for n in (1..=k).rev() {
                // Descending n: row n−1 of both tables still holds the
                // previous column's values when row n reads it.
                let (lower, upper) = g.split_at_mut(n);
                let g_prev = &lower[n - 1];
                let g_cur = &mut upper[0];
                for i in 0..n_w {
                    g_cur[i] += wj * g_prev[i];
                }
                g_cur[j] += r[n - 1];
                r[n] += wj * r[n - 1];
            }
        }
        let grad = g.pop().expect("k+1 rows were allocated");
        (r, grad)
    }

    /// Log-space variant of [`r_gradient`]: returns
    /// `(log R(0..=k), log ∂R(k)/∂w)`.
    pub(crate) fn r_gradient_log(k: usize, logw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n_w = logw.len();
        let mut r = vec![f64::NEG_INFINITY; k + 1];
        r[0] = 0.0;
        let mut g = vec![vec![f64::NEG_INFINITY; n_w]; k + 1];
        for (j, &lwj) in logw.iter().enumerate() {
            for n in (1..=k).rev() {
                let (lower, upper) = g.split_at_mut(n);
                let g_prev = &lower[n - 1];
                let g_cur = &mut upper[0];
                for i in 0..n_w {
                    g_cur[i] = logaddexp(g_cur[i], lwj + g_prev[i]);
                }
                g_cur[j] = logaddexp(g_cur[j], r[n - 1]);
                r[n] = logaddexp(r[n], lwj + r[n - 1]);
            }
        }
        let grad = g.pop().expect("k+1 rows were allocated");
        (r, grad)
    }
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Bernoulli weights `w_i = p_i / (1 − p_i)` of the non-degenerate entries
/// of a success-probability vector, with the map back to original indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliWeights {
    values: Vec<f64>,
    index_map: Vec<usize>,
}

impl BernoulliWeights {
    /// Wraps raw positive weights with the identity index map (weight slot
    /// `k` is original index `k`).
    ///
    /// # Errors
    /// [`Error::Domain`] for nonpositive or non-finite entries.
    pub fn from_weights(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain {
                reason: format!(
                    "weight at index {bad} is {}, expected a positive finite value",
                    values[bad]
                ),
            });
        }
        let index_map = (0..values.len()).collect();
        Ok(BernoulliWeights { values, index_map })
    }

    /// The weight values, in slot order.
    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Original index of each weight slot.
    #[must_use]
    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    /// Number of weights.
    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when no non-degenerate entries exist.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Natural logs of the weights.
    #[must_use]
    pub fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|w| w.ln()).collect()
    }

    /// Whether operations on these weights tabulate in log space.
    #[must_use]
    pub fn uses_log_scale(&self) -> bool {
        kernel::use_log_scale(&self.values)
    }
}

/// Maps the non-degenerate entries of `probs` to weights `w = p/(1−p)`.
///
/// Degenerate entries (exactly 0 or 1 after snapping) are excluded — they
/// carry no weight and are handled by the distributions' boundary forms. The
/// index map records each weight's original position.
#[must_use]
pub fn weights_from_probs(probs: &SuccessProbabilities) -> BernoulliWeights {
    let p = probs.values();
    let index_map: Vec<usize> = probs.free().to_vec();
    let values = index_map.iter().map(|&i| p[i] / (1.0 - p[i])).collect();
    BernoulliWeights { values, index_map }
}

/// Diagonal of the Jacobian `∂w/∂p`: entry `k` is `(1 + w_k)²` for weight
/// slot `k` (equivalently `1/(1−p)²` at the matching probability).
///
/// The Jacobian is diagonal because `w_i` depends only on `p_i`; only the
/// diagonal is materialized.
#[must_use]
pub fn weight_jacobian(probs: &SuccessProbabilities) -> Vec<f64> {
    weights_from_probs(probs)
        .values()
        .iter()
        .map(|w| (1.0 + w) * (1.0 + w))
        .collect()
}

// ---------------------------------------------------------------------------
// R-function values and gradients
// ---------------------------------------------------------------------------

/// `R(k, A)`: the sum over all `k`-subsets of the weight products.
///
/// Returns 1 for `k = 0` and 0 for `k > |A|`. Long or extreme weight vectors
/// are tabulated in log space and exponentiated once at the end (the result
/// may round to `+∞` if the true value exceeds `f64` range).
#[must_use]
pub fn r_value(k: usize, weights: &BernoulliWeights) -> f64 {
    r_values(k, weights)[k]
}

/// `R(0..=kmax, A)` in one tabulation pass.
#[must_use]
pub fn r_values(kmax: usize, weights: &BernoulliWeights) -> Vec<f64> {
    if weights.uses_log_scale() {
        kernel::r_all_log(kmax, &weights.log_values(), &[])
            .into_iter()
            .map(f64::exp)
            .collect()
    } else {
        kernel::r_all(kmax, weights.values(), &[])
    }
}

/// `R(k, A)` by the alternating power-sum recurrence
/// `R(k) = (1/k) Σ_{i=1..k} (−1)^{i+1} T(i) R(k−i)` with power sums
/// `T(i) = Σ_j w_j^i`.
///
/// This is a verification oracle only: the alternating signs cancel
/// catastrophically for large sets or extreme weights, and the power sums
/// themselves can overflow.
///
/// # Errors
/// [`Error::Overflow`] when any power sum or intermediate value leaves the
/// finite `f64` range.
pub fn r_value_power_sum(k: usize, weights: &BernoulliWeights) -> Result<f64> {
    let w = weights.values();
    if k > w.len() {
        return Ok(0.0);
    }
    // T(1..=k): power sums of the weights.
    let mut power_sums = vec![0.0; k + 1];
    for (i, slot) in power_sums.iter_mut().enumerate().skip(1) {
        *slot = w.iter().map(|wj| wj.powi(i as i32)).sum();
        if !slot.is_finite() {
            return Err(Error::Overflow {
                context: format!("power sum T({i}) of {} weights", w.len()),
            });
        }
    }
    let mut r = vec![0.0; k + 1];
    r[0] = 1.0;
    for m in 1..=k {
        let mut acc = 0.0;
        for i in 1..=m {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * power_sums[i] * r[m - i];
        }
        r[m] = acc / m as f64;
        if !r[m].is_finite() {
            return Err(Error::Overflow {
                context: format!("power-sum recurrence at arity {m}"),
            });
        }
    }
    Ok(r[k])
}

/// `∂R(k, A)/∂w`: gradient of the R-function in weight space, co-tabulated
/// with the values (entry `i` equals `R(k−1, A∖{i})`).
#[must_use]
pub fn r_gradient(k: usize, weights: &BernoulliWeights) -> Vec<f64> {
    if weights.uses_log_scale() {
        let (_, log_grad) = kernel::r_gradient_log(k, &weights.log_values());
        log_grad.into_iter().map(f64::exp).collect()
    } else {
        let (_, grad) = kernel::r_gradient(k, weights.values());
        grad
    }
}

/// `∂R(k, A)/∂w_i = π_i(k) · R(k, A) / w_i`: the same gradient through the
/// inclusion-probability route (an independent identity used for
/// cross-checking the co-tabulation).
///
/// # Errors
/// As [`inclusion_first`].
pub fn r_gradient_via_inclusion(k: usize, weights: &BernoulliWeights) -> Result<Vec<f64>> {
    let n = weights.len();
    if k > n {
        return Ok(vec![0.0; n]);
    }
    let pi = inclusion_first(k, weights)?;
    let r = r_value(k, weights);
    Ok(pi
        .first_order
        .iter()
        .zip(weights.values())
        .map(|(&pi_i, &w_i)| pi_i * r / w_i)
        .collect())
}

// ---------------------------------------------------------------------------
// Materialized tabulation (inspection / verification)
// ---------------------------------------------------------------------------

/// The full `(n, j)` tabulation grid of the two-term recurrence, with an
/// optional gradient co-table.
///
/// `value(n, j) = R(n, {first j weights})`; production queries use the
/// rolled single-row kernels, this materialized form exists for inspection
/// and recurrence-level tests.
#[derive(Debug, Clone)]
pub struct RTable {
    kmax: usize,
    /// `values[n][j]`, rows `n = 0..=kmax`, columns `j = 0..=N`.
    values: Vec<Vec<f64>>,
    /// `gradients[n][j][i] = ∂ values[n][j] / ∂w_i`, when requested.
    gradients: Option<Vec<Vec<Vec<f64>>>>,
}

impl RTable {
    /// Tabulates `c(n, j)` for `n ≤ kmax` over prefixes of the weights.
    #[must_use]
    pub fn build(kmax: usize, weights: &BernoulliWeights) -> Self {
        Self::build_impl(kmax, weights, false)
    }

    /// Tabulates values and the gradient co-table.
    #[must_use]
    pub fn build_with_gradient(kmax: usize, weights: &BernoulliWeights) -> Self {
        Self::build_impl(kmax, weights, true)
    }

    // The two-term recurrence reads three adjacent cells of the same
    // nested tables; explicit indices keep it aligned with the math.
    #[allow(clippy::needless_range_loop)]
    fn build_impl(kmax: usize, weights: &BernoulliWeights, with_gradient: bool) -> Self {
        let w = weights.values();
        let n_w = w.len();
        let mut values = vec![vec![0.0; n_w + 1]; kmax + 1];
        values[0].fill(1.0);
        let mut gradients = with_gradient.then(|| vec![vec![vec![0.0; n_w]; n_w + 1]; kmax + 1]);
        for n in 1..=kmax {
            for j in 1..=n_w {
                let wj = w[j - 1];
                values[n][j] = values[n][j - 1] + wj * values[n - 1][j - 1];
                if let Some(g) = gradients.as_mut() {
                    for i in 0..n_w {
                        g[n][j][i] = g[n][j - 1][i] + wj * g[n - 1][j - 1][i];
                    }
                    g[n][j][j - 1] += values[n - 1][j - 1];
                }
            }
        }
        RTable {
            kmax,
            values,
            gradients,
        }
    }

    /// Largest tabulated arity.
    #[must_use]
    pub fn kmax(&self) -> usize {
        self.kmax
    }

    /// `c(n, j) = R(n, {first j weights})`; zero outside the grid.
    #[must_use]
    pub fn value(&self, n: usize, j: usize) -> f64 {
        if n > self.kmax || j >= self.values[0].len() {
            return 0.0;
        }
        self.values[n][j]
    }

    /// `∂c(n, j)/∂w_i` from the co-table.
    ///
    /// # Panics
    /// When the table was built without gradients.
    #[must_use]
    pub fn gradient(&self, n: usize, j: usize, i: usize) -> f64 {
        let g = self
            .gradients
            .as_ref()
            .expect("RTable was built without the gradient co-table");
        g[n][j][i]
    }

    /// Final-column values `R(0..=kmax, A)`.
    #[must_use]
    pub fn final_values(&self) -> Vec<f64> {
        self.values.iter().map(|row| row[row.len() - 1]).collect()
    }
}

// ---------------------------------------------------------------------------
// Inclusion probabilities
// ---------------------------------------------------------------------------

/// First-order inclusion probabilities of a size-`z` conditional Bernoulli
/// draw: `π_i = P(d_i = 1 | ||d||_0 = z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionProbabilities {
    /// `π_i` per weight slot.
    pub first_order: Vec<f64>,
    /// The conditioning budget.
    pub z: usize,
}

impl InclusionProbabilities {
    /// Sum of the probabilities (equals `z` up to roundoff).
    #[must_use]
    pub fn total(&self) -> f64 {
        self.first_order.iter().sum()
    }
}

/// First-order inclusion probabilities
/// `π_i = w_i · R(z−1, A∖{i}) / R(z, A)`.
///
/// Each set-difference value comes from a fresh tabulation over the reduced
/// index sequence (computed in parallel across `i`; per-index work is serial
/// so the result is thread-count independent). For `z = 0` all probabilities
/// are zero; for `z = |A|` all are one.
///
/// # Errors
/// [`Error::Domain`] when `z > |A|` (no size-`z` subset exists).
pub fn inclusion_first(z: usize, weights: &BernoulliWeights) -> Result<InclusionProbabilities> {
    let n = weights.len();
    if z > n {
        return Err(Error::Domain {
            reason: format!("inclusion probabilities need z ≤ |A|, got z = {z}, |A| = {n}"),
        });
    }
    if z == 0 {
        return Ok(InclusionProbabilities {
            first_order: vec![0.0; n],
            z,
        });
    }
    let first_order = if weights.uses_log_scale() {
        let logw = weights.log_values();
        let log_r_full = kernel::r_all_log(z, &logw, &[])[z];
        (0..n)
            .into_par_iter()
            .map(|i| {
                let log_r_reduced = kernel::r_all_log(z - 1, &logw, &[i])[z - 1];
                (logw[i] + log_r_reduced - log_r_full).exp()
            })
            .collect()
    } else {
        let w = weights.values();
        let r_full = kernel::r_all(z, w, &[])[z];
        (0..n)
            .into_par_iter()
            .map(|i| {
                let r_reduced = kernel::r_all(z - 1, w, &[i])[z - 1];
                w[i] * r_reduced / r_full
            })
            .collect()
    };
    Ok(InclusionProbabilities { first_order, z })
}

/// Second-order inclusion probability
/// `π_{i,j} = w_i w_j · R(z−2, A∖{i,j}) / R(z, A)` for `i ≠ j`
/// (the probability that entries `i` and `j` are both active).
///
/// # Errors
/// [`Error::EqualPairIndices`] when `i = j`; [`Error::Domain`] for an index
/// out of range or `z > |A|`.
pub fn inclusion_second(z: usize, weights: &BernoulliWeights, i: usize, j: usize) -> Result<f64> {
    let n = weights.len();
    if i == j {
        return Err(Error::EqualPairIndices { index: i });
    }
    if i >= n || j >= n {
        return Err(Error::Domain {
            reason: format!("pair index out of range: ({i}, {j}) with |A| = {n}"),
        });
    }
    if z > n {
        return Err(Error::Domain {
            reason: format!("inclusion probabilities need z ≤ |A|, got z = {z}, |A| = {n}"),
        });
    }
    if z < 2 {
        return Ok(0.0);
    }
    if weights.uses_log_scale() {
        let logw = weights.log_values();
        let log_r_full = kernel::r_all_log(z, &logw, &[])[z];
        let log_r_reduced = kernel::r_all_log(z - 2, &logw, &[i, j])[z - 2];
        Ok((logw[i] + logw[j] + log_r_reduced - log_r_full).exp())
    } else {
        let w = weights.values();
        let r_full = kernel::r_all(z, w, &[])[z];
        let r_reduced = kernel::r_all(z - 2, w, &[i, j])[z - 2];
        Ok(w[i] * w[j] * r_reduced / r_full)
    }
}

/// Which derivative tensors [`inclusion_derivatives`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    /// Derivatives of the first-order probabilities `π_i`.
    First,
    /// Derivatives of the pairwise probabilities `π_{i,j}`.
    Second,
}

/// Derivatives of the first-order inclusion probabilities.
///
/// Built from the identities
/// `∂π_i/∂w_i = (π_i − π_i²)/w_i` and
/// `∂π_i/∂w_j = (π_{i,j} − π_i π_j)/w_j` for `j ≠ i`; the p-space form
/// multiplies by the weight-Jacobian diagonal `(1+w_j)²` of the
/// differentiated coordinate.
#[derive(Debug, Clone)]
pub struct FirstOrderInclusionDerivatives {
    /// `w_space[i][j] = ∂π_i/∂w_j`.
    pub w_space: Vec<Vec<f64>>,
    /// `p_space[i][j] = ∂π_i/∂p_j`.
    pub p_space: Vec<Vec<f64>>,
}

/// Derivatives of the pairwise inclusion probabilities (diagonals unused —
/// `π_{i,j}` is defined for `i ≠ j`).
///
/// Built from `∂π_{i,j}/∂w_i = π_{i,j}(1 − π_i)/w_i` (symmetrically in `j`)
/// and the mixed second derivative
/// `∂²π_{i,j}/∂w_i∂w_j = π_{i,j}/(w_i w_j) · [(1−π_i)(1−π_j) − (π_{i,j} −
/// π_i π_j)]`; p-space forms multiply by `(1+w)²` per differentiated
/// coordinate.
#[derive(Debug, Clone)]
pub struct SecondOrderInclusionDerivatives {
    /// `dpair_dw[i][j] = ∂π_{i,j}/∂w_i` (differentiate the first index; use
    /// `[j][i]` for the other partial).
    pub dpair_dw: Vec<Vec<f64>>,
    /// `dpair_dp[i][j] = ∂π_{i,j}/∂p_i`.
    pub dpair_dp: Vec<Vec<f64>>,
    /// `d2pair_dw[i][j] = ∂²π_{i,j}/∂w_i∂w_j` (symmetric).
    pub d2pair_dw: Vec<Vec<f64>>,
    /// `d2pair_dp[i][j] = ∂²π_{i,j}/∂p_i∂p_j`.
    pub d2pair_dp: Vec<Vec<f64>>,
}

/// Derivative tensors of the inclusion probabilities at one budget.
#[derive(Debug, Clone)]
pub enum InclusionDerivatives {
    /// `∂π_i/∂·_j` matrices.
    First(FirstOrderInclusionDerivatives),
    /// `∂π_{i,j}/∂·` and `∂²π_{i,j}/∂·∂·` matrices.
    Second(SecondOrderInclusionDerivatives),
}

/// Computes inclusion-probability derivative tensors in both weight space
/// and probability space.
///
/// # Errors
/// As [`inclusion_first`] / [`inclusion_second`].
// The identities are stated over matrix coordinates (i, j); indexed loops
// mirror them directly.
#[allow(clippy::needless_range_loop)]
pub fn inclusion_derivatives(
    z: usize,
    weights: &BernoulliWeights,
    order: DerivativeOrder,
) -> Result<InclusionDerivatives> {
    let n = weights.len();
    let w = weights.values();
    let pi = inclusion_first(z, weights)?.first_order;
    // π_{i,j} for all pairs (symmetric, zero diagonal).
    let mut pair = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let pij = inclusion_second(z, weights, i, j)?;
            pair[i][j] = pij;
            pair[j][i] = pij;
        }
    }
    let jac: Vec<f64> = w.iter().map(|wi| (1.0 + wi) * (1.0 + wi)).collect();

    match order {
        DerivativeOrder::First => {
            let mut w_space = vec![vec![0.0; n]; n];
            let mut p_space = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let dw = if i == j {
                        (pi[i] - pi[i] * pi[i]) / w[i]
                    } else {
                        (pair[i][j] - pi[i] * pi[j]) / w[j]
                    };
                    w_space[i][j] = dw;
                    p_space[i][j] = dw * jac[j];
                }
            }
            Ok(InclusionDerivatives::First(
                FirstOrderInclusionDerivatives { w_space, p_space },
            ))
        }
        DerivativeOrder::Second => {
            let mut dpair_dw = vec![vec![0.0; n]; n];
            let mut dpair_dp = vec![vec![0.0; n]; n];
            let mut d2pair_dw = vec![vec![0.0; n]; n];
            let mut d2pair_dp = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let dw = pair[i][j] * (1.0 - pi[i]) / w[i];
                    dpair_dw[i][j] = dw;
                    dpair_dp[i][j] = dw * jac[i];
                    let bracket = (1.0 - pi[i]) * (1.0 - pi[j]) - (pair[i][j] - pi[i] * pi[j]);
                    let d2 = pair[i][j] / (w[i] * w[j]) * bracket;
                    d2pair_dw[i][j] = d2;
                    d2pair_dp[i][j] = d2 * jac[i] * jac[j];
                }
            }
            Ok(InclusionDerivatives::Second(
                SecondOrderInclusionDerivatives {
                    dpair_dw,
                    dpair_dp,
                    d2pair_dw,
                    d2pair_dp,
                },
            ))
        }
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // matrix-coordinate assertions
mod tests {
    use super::*;
    use crate::oracle::{self, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn weights(values: &[f64]) -> BernoulliWeights {
        BernoulliWeights::from_weights(values.to_vec()).unwrap()
    }

    fn random_weights(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> BernoulliWeights {
        weights(&(0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>())
    }

    // ----- Weights and Jacobian -----

    #[test]
    fn weight_map_frozen_values() {
        let probs = SuccessProbabilities::new(vec![0.5]).unwrap();
        assert_eq!(weights_from_probs(&probs).values(), &[1.0]);
        let probs = SuccessProbabilities::new(vec![0.75]).unwrap();
        assert_eq!(weights_from_probs(&probs).values(), &[3.0]);
    }

    #[test]
    fn degenerate_entries_are_excluded_with_index_map() {
        let probs = SuccessProbabilities::new(vec![0.5, 1.0, 0.2]).unwrap();
        let w = weights_from_probs(&probs);
        assert_eq!(w.values(), &[1.0, 0.25]);
        assert_eq!(w.index_map(), &[0, 2]);
        assert_eq!(probs.ones(), &[1]);
    }

    #[test]
    fn jacobian_diagonal_frozen_values() {
        let probs = SuccessProbabilities::new(vec![0.5]).unwrap();
        assert_eq!(weight_jacobian(&probs), vec![4.0]);
        let probs = SuccessProbabilities::new(vec![0.8]).unwrap();
        let jac = weight_jacobian(&probs);
        assert!((jac[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences_of_the_weight_map() {
        let p0 = [0.3, 0.55, 0.9];
        let probs = SuccessProbabilities::new(p0.to_vec()).unwrap();
        let jac = weight_jacobian(&probs);
        for i in 0..3 {
            let f = |p: &[f64]| {
                let probs = SuccessProbabilities::new(p.to_vec()).unwrap();
                weights_from_probs(&probs).values()[i]
            };
            let fd = oracle::central_difference(f, &p0, i, 1e-6);
            assert!(
                relative_error(jac[i], fd) < 1e-7,
                "i={i}: {} vs {fd}",
                jac[i]
            );
        }
    }

    // ----- R values -----

    #[test]
    fn r_value_frozen_examples() {
        assert_eq!(r_value(2, &weights(&[1.0, 2.0, 3.0])), 11.0);
        assert_eq!(r_value(2, &weights(&[1.0, 1.0, 1.0, 1.0])), 6.0);
        assert_eq!(r_value(0, &weights(&[5.0, 9.0])), 1.0);
        assert_eq!(r_value(3, &weights(&[1.0, 2.0])), 0.0);
    }

    #[test]
    fn r_value_matches_subset_enumeration_on_random_instances() {
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for _ in 0..40 {
            let n = rng.random_range(1..=10);
            let w = random_weights(&mut rng, n, 0.1, 10.0);
            for k in 0..=n {
                let exact = oracle::r_by_enumeration(k, w.values());
                let got = r_value(k, &w);
                assert!(
                    relative_error(exact, got) < 1e-12,
                    "n={n} k={k}: {exact} vs {got}"
                );
            }
        }
    }

    #[test]
    fn log_scale_triggers_and_agrees() {
        // Length trigger: 70 unit weights → R(k) = C(70, k).
        let w = weights(&vec![1.0; 70]);
        assert!(w.uses_log_scale());
        for k in [0usize, 1, 3, 35, 70] {
            let got = r_value(k, &w);
            let exact = oracle::binomial_f64(70, k);
            assert!(
                relative_error(exact, got) < 1e-10,
                "k={k}: {exact} vs {got}"
            );
        }
        // Ratio trigger: spread beyond 1e8 at small n.
        let w = weights(&[3.0e4, 2.0e-4, 1.0, 0.5]);
        assert!(w.uses_log_scale());
        for k in 0..=4 {
            let exact = oracle::r_by_enumeration(k, w.values());
            assert!(relative_error(exact, r_value(k, &w)) < 1e-10);
        }
        // Absolute trigger: uniformly huge weights would overflow neither
        // length nor ratio rule.
        let w = weights(&[2.0e7, 3.0e7, 1.0e7]);
        assert!(w.uses_log_scale());
        let exact = oracle::r_by_enumeration(2, w.values());
        assert!(relative_error(exact, r_value(2, &w)) < 1e-10);
        // Small benign vectors stay linear.
        assert!(!weights(&[1.0, 2.0, 3.0]).uses_log_scale());
    }

    // ----- Power-sum oracle -----

    #[test]
    fn power_sum_frozen_examples() {
        assert_eq!(
            r_value_power_sum(1, &weights(&[1.0, 2.0, 3.0])).unwrap(),
            6.0
        );
        assert!((r_value_power_sum(3, &weights(&[1.0, 1.0, 1.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r_value_power_sum(5, &weights(&[1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn power_sum_agrees_with_tabulation_at_desk_scale() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..60 {
            let n = rng.random_range(1..=10);
            let w = random_weights(&mut rng, n, 0.1, 10.0);
            for k in 0..=n {
                let a = r_value(k, &w);
                let b = r_value_power_sum(k, &w).unwrap();
                assert!(relative_error(a, b) < 1e-9, "n={n} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn power_sum_reports_overflow() {
        let w = weights(&[1e200, 1e200, 1e200, 1e200]);
        let err = r_value_power_sum(2, &w).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }), "{err}");
    }

    // ----- R gradients -----

    #[test]
    fn r_gradient_frozen_examples() {
        assert_eq!(r_gradient(2, &weights(&[1.0, 1.0, 1.0, 1.0])), vec![3.0; 4]);
        assert_eq!(
            r_gradient(2, &weights(&[1.0, 2.0, 3.0])),
            vec![5.0, 4.0, 3.0]
        );
        assert_eq!(r_gradient(0, &weights(&[1.0, 2.0])), vec![0.0, 0.0]);
    }

    #[test]
    fn r_gradient_equals_reduced_set_values_and_fd() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..25 {
            let n = rng.random_range(2..=9);
            let w = random_weights(&mut rng, n, 0.2, 5.0);
            let k = rng.random_range(1..=n);
            let grad = r_gradient(k, &w);
            for i in 0..n {
                // ∂R(k)/∂w_i = R(k−1, A∖{i}) by multilinearity.
                let mut reduced = w.values().to_vec();
                reduced.remove(i);
                let exact = oracle::r_by_enumeration(k - 1, &reduced);
                assert!(relative_error(exact, grad[i]) < 1e-11);
            }
            let f = |x: &[f64]| r_value(k, &weights(x));
            let report = oracle::finite_difference_check(f, &grad, w.values(), 1e-6, 1e-6);
            assert!(report.pass, "max rel err {}", report.max_relative_error);
        }
    }

    #[test]
    fn gradient_routes_agree() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for _ in 0..25 {
            let n = rng.random_range(1..=9);
            let w = random_weights(&mut rng, n, 0.2, 5.0);
            let k = rng.random_range(0..=n);
            let a = r_gradient(k, &w);
            let b = r_gradient_via_inclusion(k, &w).unwrap();
            for i in 0..n {
                assert!(relative_error(a[i], b[i]) < 1e-10, "k={k} i={i}");
            }
        }
    }

    #[test]
    fn log_scale_gradient_agrees_with_linear() {
        // 70 weights forces the log path; compare against the linear kernel
        // run directly (values stay in range for these weights).
        let values: Vec<f64> = (0..70).map(|i| 0.5 + 0.02 * i as f64).collect();
        let w = weights(&values);
        assert!(w.uses_log_scale());
        let log_route = r_gradient(5, &w);
        let (_, linear_route) = kernel::r_gradient(5, w.values());
        for i in 0..70 {
            assert!(relative_error(log_route[i], linear_route[i]) < 1e-10);
        }
    }

    // ----- RTable -----

    #[test]
    fn rtable_invariants_and_recurrence() {
        let w = weights(&[0.5, 1.5, 2.5, 4.0]);
        let table = RTable::build_with_gradient(3, &w);
        // c(0, j) = 1 for every prefix.
        for j in 0..=4 {
            assert_eq!(table.value(0, j), 1.0);
        }
        // c(n, j) = 0 when n > j (not enough indices).
        assert_eq!(table.value(2, 1), 0.0);
        assert_eq!(table.value(3, 2), 0.0);
        // Two-term recurrence cell by cell.
        for n in 1..=3 {
            for j in 1..=4 {
                let expected =
                    table.value(n, j - 1) + w.values()[j - 1] * table.value(n - 1, j - 1);
                assert!((table.value(n, j) - expected).abs() < 1e-12);
            }
        }
        // Final column equals the rolled kernel and the enumeration oracle.
        let finals = table.final_values();
        for n in 0..=3 {
            assert!(relative_error(finals[n], oracle::r_by_enumeration(n, w.values())) < 1e-12);
        }
        // Gradient co-table: zero at arity 0, final column matches r_gradient.
        for j in 0..=4 {
            for i in 0..4 {
                assert_eq!(table.gradient(0, j, i), 0.0);
            }
        }
        let grad = r_gradient(3, &w);
        for i in 0..4 {
            assert!((table.gradient(3, 4, i) - grad[i]).abs() < 1e-12);
        }
    }

    // ----- Inclusion probabilities -----

    #[test]
    fn inclusion_first_frozen_examples() {
        // Equal weights, z = 2, N = 4 → π_i = z/N = 1/2.
        let pi = inclusion_first(2, &weights(&[1.0; 4])).unwrap();
        for &p in &pi.first_order {
            assert!((p - 0.5).abs() < 1e-12);
        }
        // w = (1,2,3), z = 2: R(2) = 11, reduced-first values 5, 4, 3 →
        // π = (5/11, 8/11, 9/11).
        let pi = inclusion_first(2, &weights(&[1.0, 2.0, 3.0])).unwrap();
        let expected = [5.0 / 11.0, 8.0 / 11.0, 9.0 / 11.0];
        for (a, b) in pi.first_order.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((pi.total() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inclusion_first_edges_and_errors() {
        let w = weights(&[0.5, 2.0, 3.0]);
        assert_eq!(inclusion_first(0, &w).unwrap().first_order, vec![0.0; 3]);
        let all = inclusion_first(3, &w).unwrap().first_order;
        for p in all {
            assert!((p - 1.0).abs() < 1e-12);
        }
        assert!(inclusion_first(4, &w).is_err());
    }

    #[test]
    fn inclusion_first_matches_enumeration_and_sums_to_z() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..25 {
            let n = rng.random_range(2..=9);
            let z = rng.random_range(1..n);
            let w = random_weights(&mut rng, n, 0.1, 8.0);
            let pi = inclusion_first(z, &w).unwrap();
            assert!((pi.total() - z as f64).abs() < 1e-10);
            // Enumeration: π_i = Σ_{|B|=z, i∈B} Πw / R(z).
            let r_full = oracle::r_by_enumeration(z, w.values());
            for i in 0..n {
                let mut reduced = w.values().to_vec();
                reduced.remove(i);
                let expected = w.values()[i] * oracle::r_by_enumeration(z - 1, &reduced) / r_full;
                assert!(relative_error(expected, pi.first_order[i]) < 1e-11);
                assert!(pi.first_order[i] > 0.0 && pi.first_order[i] < 1.0);
            }
        }
    }

    #[test]
    fn inclusion_second_frozen_examples_and_structure() {
        // z = 1: pairs can never co-occur.
        assert_eq!(
            inclusion_second(1, &weights(&[1.0, 2.0, 3.0]), 0, 2).unwrap(),
            0.0
        );
        // Equal weights, z = 2, N = 3 → 1/3 per pair.
        let pij = inclusion_second(2, &weights(&[1.0; 3]), 0, 1).unwrap();
        assert!((pij - 1.0 / 3.0).abs() < 1e-12);
        // Symmetry and the equal-index error.
        let w = weights(&[0.7, 1.3, 2.9, 0.4]);
        let a = inclusion_second(2, &w, 1, 3).unwrap();
        let b = inclusion_second(2, &w, 3, 1).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            inclusion_second(2, &w, 2, 2),
            Err(Error::EqualPairIndices { index: 2 })
        ));
    }

    #[test]
    fn pairs_are_negatively_associated() {
        // π_i π_j > π_{i,j} strictly for 1 ≤ z < n.
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..20 {
            let n = rng.random_range(2..=8);
            let z = rng.random_range(1..n);
            let w = random_weights(&mut rng, n, 0.2, 6.0);
            let pi = inclusion_first(z, &w).unwrap().first_order;
            for i in 0..n {
                for j in (i + 1)..n {
                    let pij = inclusion_second(z, &w, i, j).unwrap();
                    assert!(
                        pi[i] * pi[j] > pij,
                        "n={n} z={z} i={i} j={j}: {} ≤ {pij}",
                        pi[i] * pi[j]
                    );
                }
            }
        }
    }

    #[test]
    fn inclusion_second_matches_enumeration() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..15 {
            let n = rng.random_range(3..=8);
            let z = rng.random_range(2..n);
            let w = random_weights(&mut rng, n, 0.1, 8.0);
            let r_full = oracle::r_by_enumeration(z, w.values());
            for i in 0..n {
                for j in (i + 1)..n {
                    let mut reduced = w.values().to_vec();
                    reduced.remove(j); // remove larger index first
                    reduced.remove(i);
                    let expected =
                        w.values()[i] * w.values()[j] * oracle::r_by_enumeration(z - 2, &reduced)
                            / r_full;
                    let got = inclusion_second(z, &w, i, j).unwrap();
                    assert!(relative_error(expected, got) < 1e-11);
                }
            }
        }
    }

    // ----- Inclusion-probability derivatives -----

    #[test]
    fn first_order_derivatives_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = rng.random_range(2..=6);
            let z = rng.random_range(1..n);
            let w = random_weights(&mut rng, n, 0.3, 4.0);
            let InclusionDerivatives::First(d) =
                inclusion_derivatives(z, &w, DerivativeOrder::First).unwrap()
            else {
                panic!("requested first order")
            };
            for i in 0..n {
                let f = |x: &[f64]| inclusion_first(z, &weights(x)).unwrap().first_order[i];
                let report =
                    oracle::finite_difference_check(f, &d.w_space[i], w.values(), 1e-6, 1e-7);
                assert!(report.pass, "w-space i={i}: {}", report.max_relative_error);
            }
        }
    }

    #[test]
    fn first_order_p_space_derivatives_match_finite_differences() {
        let p0 = [0.25, 0.5, 0.7, 0.4];
        let z = 2;
        let probs = SuccessProbabilities::new(p0.to_vec()).unwrap();
        let w = weights_from_probs(&probs);
        let InclusionDerivatives::First(d) =
            inclusion_derivatives(z, &w, DerivativeOrder::First).unwrap()
        else {
            panic!("requested first order")
        };
        for i in 0..4 {
            let f = |p: &[f64]| {
                let probs = SuccessProbabilities::new(p.to_vec()).unwrap();
                inclusion_first(z, &weights_from_probs(&probs))
                    .unwrap()
                    .first_order[i]
            };
            let report = oracle::finite_difference_check(f, &d.p_space[i], &p0, 1e-6, 1e-7);
            assert!(report.pass, "p-space i={i}: {}", report.max_relative_error);
        }
    }

    #[test]
    fn second_order_derivatives_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        for _ in 0..8 {
            let n = rng.random_range(3..=6);
            let z = rng.random_range(2..n);
            let w = random_weights(&mut rng, n, 0.3, 4.0);
            let InclusionDerivatives::Second(d) =
                inclusion_derivatives(z, &w, DerivativeOrder::Second).unwrap()
            else {
                panic!("requested second order")
            };
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let f = |x: &[f64]| inclusion_second(z, &weights(x), i, j).unwrap();
                    // ∂π_{i,j}/∂w_i.
                    let fd = oracle::central_difference(f, w.values(), i, 1e-6);
                    assert!(
                        relative_error(d.dpair_dw[i][j], fd) < 1e-7,
                        "dpair i={i} j={j}"
                    );
                    // Mixed second derivative by a nested central stencil.
                    let h = 1e-4;
                    let base = w.values().to_vec();
                    let eval = |di: f64, dj: f64| {
                        let mut x = base.clone();
                        x[i] += di;
                        x[j] += dj;
                        f(&x)
                    };
                    let mixed =
                        (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h);
                    assert!(
                        relative_error(d.d2pair_dw[i][j], mixed) < 1e-4,
                        "d2pair i={i} j={j}: {} vs {mixed}",
                        d.d2pair_dw[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn second_order_p_space_derivatives_match_finite_differences() {
        let p0 = [0.3, 0.55, 0.65, 0.45];
        let z = 2;
        let probs = SuccessProbabilities::new(p0.to_vec()).unwrap();
        let w = weights_from_probs(&probs);
        let InclusionDerivatives::Second(d) =
            inclusion_derivatives(z, &w, DerivativeOrder::Second).unwrap()
        else {
            panic!("requested second order")
        };
        let pair_p = |p: &[f64], i: usize, j: usize| {
            let probs = SuccessProbabilities::new(p.to_vec()).unwrap();
            inclusion_second(z, &weights_from_probs(&probs), i, j).unwrap()
        };
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let fd = oracle::central_difference(|p| pair_p(p, i, j), &p0, i, 1e-6);
                assert!(relative_error(d.dpair_dp[i][j], fd) < 1e-7);
                let h = 1e-4;
                let eval = |di: f64, dj: f64| {
                    let mut p = p0.to_vec();
                    p[i] += di;
                    p[j] += dj;
                    pair_p(&p, i, j)
                };
                let mixed = (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h);
                assert!(
                    relative_error(d.d2pair_dp[i][j], mixed) < 1e-4,
                    "i={i} j={j}: {} vs {mixed}",
                    d.d2pair_dp[i][j]
                );
            }
        }
    }

    // ----- Mixed second derivative of R itself -----

    #[test]
    fn r_second_derivatives_are_multilinear() {
        // ∂²R/∂w_i∂w_j = R(k−2, A∖{i,j}) for i ≠ j, and 0 for i = j.
        let w = weights(&[0.8, 1.7, 2.2, 3.1]);
        let k = 3;
        let f = |x: &[f64], i: usize, j: usize| {
            let h = 1e-4;
            let eval = |di: f64, dj: f64| {
                let mut y = x.to_vec();
                y[i] += di;
                y[j] += dj;
                r_value(k, &weights(&y))
            };
            if i == j {
                // Pure second difference.
                (eval(h, 0.0) - 2.0 * eval(0.0, 0.0) + eval(-h, 0.0)) / (h * h)
            } else {
                (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h)
            }
        };
        for i in 0..4 {
            for j in 0..4 {
                let fd = f(w.values(), i, j);
                let expected = if i == j {
                    0.0
                } else {
                    let mut reduced = w.values().to_vec();
                    reduced.remove(i.max(j));
                    reduced.remove(i.min(j));
                    oracle::r_by_enumeration(k - 2, &reduced)
                };
                assert!(
                    relative_error(expected, fd) < 1e-5,
                    "i={i} j={j}: {expected} vs {fd}"
                );
            }
        }
    }
}
