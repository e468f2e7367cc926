//! Exact samplers for the PB, CB, and GCB models, driven by a seedable,
//! versioned random stream.
//!
//! CB designs are drawn by the sequential conditional method: a q-matrix of
//! tail-sum probabilities `q(i,j) = P(Σ_{m=j..N} d_m = i−1)` is tabulated
//! once per model, after which each coordinate is decided by one conditional
//! Bernoulli draw. GCB designs are drawn in two stages — a budget `z ∈ Z` by
//! cumulative-weight inversion over the PB weights, then a CB design at that
//! budget. Degenerate coordinates are fixed up front and the sequential
//! recursion runs on the reduced free problem only, so every conditional
//! probability stays strictly inside `(0,1)`.
//!
//! # Random stream (version 1, fixed)
//!
//! Reproducibility is part of the contract, so the generator algorithm is
//! pinned rather than left to a default:
//!
//! * generator: **ChaCha20** (`rand_chacha` 0.9, 20 rounds);
//! * key: the 64-bit seed expanded by the standard SplitMix64 expansion
//!   (`SeedableRng::seed_from_u64`);
//! * draw `k` of a batch uses ChaCha20 stream number `k`
//!   (`ChaCha20Rng::set_stream`), so draws are independent of batch size,
//!   draw order, and thread count;
//! * named sub-purposes derive a fresh 64-bit seed via two rounds of
//!   SplitMix64 mixing: `seed' = mix(seed ⊕ mix(purpose))`.
//!
//! Identical seeds therefore reproduce identical designs bit-for-bit on any
//! platform with IEEE-754 `f64` arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::combinatorics::kernel;
use crate::distributions::{pb_pmf_all, CBModel, GCBModel, PBModel};
use crate::error::Error;
use crate::Result;

// ---------------------------------------------------------------------------
// Random stream
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer: the mixing function used for purpose derivation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A named, versioned source of reproducible randomness (see the module
/// documentation for the exact algorithm).
///
/// The stream itself is just a seed; generators are created per draw index,
/// which makes sampling embarrassingly parallel without any coordination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    /// A stream rooted at `seed`.
    #[must_use]
    pub fn new(seed: u64) -> Self {
        RandomStream { seed }
    }

    /// The root seed.
    #[must_use]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent stream for a named purpose (e.g. separating gradient
    /// sampling from final sampling). Distinct purposes yield statistically
    /// independent streams; the derivation is deterministic.
    #[must_use]
    pub fn derive(&self, purpose: u64) -> RandomStream {
        RandomStream {
            seed: splitmix64(self.seed ^ splitmix64(purpose)),
        }
    }

    /// The generator for draw `index`: ChaCha20 keyed by this stream's seed
    /// on stream number `index`.
    #[must_use]
    pub fn draw_rng(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

// ---------------------------------------------------------------------------
// Sample batches
// ---------------------------------------------------------------------------

/// A batch of sampled designs, optionally paired with objective values.
///
/// Every design satisfies the generating model's constraint by construction
/// (`||d||_0 = z` for CB, `||d||_0 ∈ Z` for GCB; degenerate coordinates
/// match `p` exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// The sampled designs, in draw order.
    pub designs: Vec<Vec<u8>>,
    /// Objective values parallel to `designs`, when evaluated.
    pub objective_values: Option<Vec<f64>>,
}

impl SampleBatch {
    /// A batch of bare designs.
    #[must_use]
    pub fn new(designs: Vec<Vec<u8>>) -> Self {
        SampleBatch {
            designs,
            objective_values: None,
        }
    }

    /// Number of designs.
    #[must_use]
    pub fn len(&self) -> usize {
        self.designs.len()
    }

    /// True when the batch holds no designs.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    /// Attaches a parallel list of objective values.
    ///
    /// # Errors
    /// [`Error::DimensionMismatch`] when the list length differs from the
    /// number of designs.
    pub fn attach_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.designs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.designs.len(),
                actual: values.len(),
            });
        }
        self.objective_values = Some(values);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// q-matrix
// ---------------------------------------------------------------------------

/// The tail-sum probability table driving sequential CB sampling, over the
/// *reduced* free problem (degenerate coordinates removed, `z ← z − |I|`).
///
/// Indexing follows the defining equation: `q(i, j) = P(Σ_{m=j..N} d_m =
/// i−1)` with `i = 1..z+1` and `j = 1..N` one-based, where `N` is the number
/// of free coordinates and `z` the reduced budget. Column `N+1` is the
/// virtual empty-tail column `(1, 0, …)`. Entries with `i > N−j+2` are zero
/// (too few positions remain). Columns are stored column-major, built
/// right-to-left in one pass; only rows `1..z+1` are kept.
///
/// Long or extreme-weight problems store the table in log space (same
/// trigger as the R-tabulations), which keeps the N≈500 tail products
/// representable.
#[derive(Debug, Clone)]
pub struct QMatrix {
    /// `columns[j−1][i−1] = q(i, j)` (or its log), `j = 1..=N`.
    columns: Vec<Vec<f64>>,
    z_free: usize,
    log_scale: bool,
}

impl QMatrix {
    /// Reduced budget `z` (rows run `1..=z+1`).
    #[must_use]
    pub fn rows(&self) -> usize {
        self.z_free + 1
    }

    /// Number of free coordinates `N` (columns run `1..=N`).
    #[must_use]
    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    /// True when the table is stored in log space.
    #[must_use]
    pub fn uses_log_scale(&self) -> bool {
        self.log_scale
    }

    /// `q(i, j)` as a linear probability, one-based; zero outside the
    /// tabulated band. Column `N+1` is the virtual empty-tail column.
    #[must_use]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        assert!(
            i >= 1 && j >= 1 && j <= self.cols() + 1,
            "q indices are one-based with j ≤ N+1"
        );
        if j == self.cols() + 1 {
            return if i == 1 { 1.0 } else { 0.0 };
        }
        match self.columns[j - 1].get(i - 1) {
            Some(&v) if self.log_scale => v.exp(),
            Some(&v) => v,
            None => 0.0,
        }
    }

    /// `q(i, j)` in the stored scale (`−∞` encodes zero in log scale).
    fn raw(&self, i: usize, j: usize) -> f64 {
        if j == self.cols() + 1 {
            let one = if self.log_scale { 0.0 } else { 1.0 };
            let zero = if self.log_scale {
                f64::NEG_INFINITY
            } else {
                0.0
            };
            return if i == 1 { one } else { zero };
        }
        match self.columns[j - 1].get(i - 1) {
            Some(&v) => v,
            None if self.log_scale => f64::NEG_INFINITY,
            None => 0.0,
        }
    }

    /// The sequential conditional `P(d_j = 1 | need more ones among
    /// columns j..N) = p_j · q(need, j+1) / q(need+1, j)`, clamped to
    /// `[0, 1]` against roundoff.
    fn conditional_one(&self, need: usize, j: usize, p_j: f64) -> f64 {
        let p_cond = if self.log_scale {
            let num = self.raw(need, j + 1);
            let den = self.raw(need + 1, j);
            (p_j.ln() + num - den).exp()
        } else {
            p_j * self.raw(need, j + 1) / self.raw(need + 1, j)
        };
        p_cond.clamp(0.0, 1.0)
    }
}

/// Tabulates the q-matrix for a CB model.
///
/// # Errors
/// [`Error::Infeasible`] when `pb_pmf(z) = 0` — for a feasibly constructed
/// model this can only happen when the success-count probability underflows
/// the linear floating-point range.
pub fn build_q(model: &CBModel) -> Result<QMatrix> {
    let weights = model.weights();
    let free = model.probs().free();
    let p = model.probs().values();
    let n_free = free.len();
    let z_free = model.z_free();
    let log_scale = weights.uses_log_scale();
    let zero = if log_scale { f64::NEG_INFINITY } else { 0.0 };

    // Virtual empty-tail column N+1 = (1, 0, …).
    let mut next = vec![zero; z_free + 2];
    next[0] = if log_scale { 0.0 } else { 1.0 };
    let mut columns = vec![Vec::new(); n_free];
    for (j, col) in columns.iter_mut().enumerate().rev() {
        let p_j = p[free[j]];
        let mut cur = vec![zero; z_free + 2];
        if log_scale {
            let (lp, lq) = (p_j.ln(), (1.0 - p_j).ln());
            cur[0] = lq + next[0];
            for i in 1..=z_free + 1 {
                cur[i] = kernel::logaddexp(lp + next[i - 1], lq + next[i]);
            }
        } else {
            cur[0] = (1.0 - p_j) * next[0];
            for i in 1..=z_free + 1 {
                cur[i] = p_j * next[i - 1] + (1.0 - p_j) * next[i];
            }
        }
        // Only rows 1..z+1 are kept (the extra slot fed the recursion).
        *col = cur[..=z_free].to_vec();
        next = cur;
    }
    let q = QMatrix {
        columns,
        z_free,
        log_scale,
    };
    let total = q.raw(z_free + 1, 1);
    let infeasible = if log_scale {
        total == f64::NEG_INFINITY
    } else {
        total <= 0.0
    };
    if infeasible {
        return Err(Error::Infeasible {
            reason: format!(
                "success-count probability P(z = {}) vanished during q-matrix tabulation",
                model.z()
            ),
        });
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

/// First index selected by cumulative inversion of `weights` at uniform
/// `u ∈ [0, 1)`; zero-weight entries are never selected.
fn invert_cumulative(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// `n` success counts drawn from the PB law by cumulative inversion over
/// `pb_pmf_all` (draw `k` uses substream `k`).
#[must_use]
pub fn pb_sample(model: &PBModel, n: usize, stream: &RandomStream) -> Vec<usize> {
    let pmf = pb_pmf_all(model);
    let total: f64 = pmf.iter().sum();
    (0..n)
        .map(|k| {
            let mut rng = stream.draw_rng(k as u64);
            invert_cumulative(&pmf, total, rng.random::<f64>())
        })
        .collect()
}

/// Draws one design from `model` through its q-matrix, consuming exactly
/// one uniform per free coordinate from `rng` (forced coordinates included,
/// which keeps the uniform-to-coordinate pairing fixed).
fn sample_one(model: &CBModel, q: &QMatrix, rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut d = vec![0u8; model.dimension()];
    for &i in model.probs().ones() {
        d[i] = 1;
    }
    let free = model.probs().free();
    let p = model.probs().values();
    let n_free = free.len();
    let mut need = model.z_free();
    for (t, &idx) in free.iter().enumerate() {
        let u: f64 = rng.random();
        let left = n_free - t;
        let active = if need == 0 {
            false
        } else if need == left {
            true
        } else {
            u < q.conditional_one(need, t + 1, p[idx])
        };
        if active {
            d[idx] = 1;
            need -= 1;
        }
    }
    d
}

/// `n` exact CB draws (Algorithm 1): sequential conditional sampling
/// through the q-matrix, draw `k` on substream `k`. Every returned design
/// has `||d||_0 = z` exactly.
///
/// # Errors
/// As [`build_q`] (numeric underflow only; a feasible model in range
/// samples without error).
pub fn cb_sample(model: &CBModel, n: usize, stream: &RandomStream) -> Result<SampleBatch> {
    let q = build_q(model)?;
    let designs = (0..n)
        .map(|k| {
            let mut rng = stream.draw_rng(k as u64);
            sample_one(model, &q, &mut rng)
        })
        .collect();
    Ok(SampleBatch::new(designs))
}

/// `n` exact GCB draws (Algorithm 2): draw `k` first selects a budget
/// `z ∈ Z` by cumulative inversion of the PB weights, then continues the
/// same substream with a CB draw at that budget. Designs are returned in
/// draw order; every design has `||d||_0 ∈ Z`.
///
/// # Errors
/// As [`build_q`] for any selected budget (the all-weights-zero case is
/// rejected at [`GCBModel::new`]).
pub fn gcb_sample(model: &GCBModel, n: usize, stream: &RandomStream) -> Result<SampleBatch> {
    let m = model.budgets().len();
    let mut tables: Vec<Option<QMatrix>> = vec![None; m];
    let mut designs = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = stream.draw_rng(k as u64);
        let u: f64 = rng.random();
        let pos = invert_cumulative(model.pb_values(), model.pb_total(), u);
        let cb = model
            .cb_component(pos)
            .expect("cumulative inversion selects positive-weight budgets only");
        if tables[pos].is_none() {
            tables[pos] = Some(build_q(cb)?);
        }
        let q = tables[pos].as_ref().expect("just built");
        designs.push(sample_one(cb, q, &mut rng));
    }
    Ok(SampleBatch::new(designs))
}
