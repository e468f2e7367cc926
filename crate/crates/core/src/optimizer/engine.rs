//! The projected stochastic ascent engine: policy dispatch over the
//! constraint kinds, the score-function gradient estimator, the optimal
//! scalar baseline, the box-scaling projector, and the main loop.

use std::cmp::Ordering;

use crate::design;
use crate::distributions::{
    cb_log_grad, cb_score_variance, gcb_log_grad, CBModel, GCBModel, SuccessProbabilities,
};
use crate::error::Error;
use crate::objectives::Objective;
use crate::optimizer::{ConstraintSpec, Direction, EvaluationCache, OptimizerConfig};
use crate::sampling::{cb_sample, gcb_sample, RandomStream, SampleBatch};
use crate::Result;

/// Stream purpose ids (part of the reproducibility contract: artifacts
/// produced with one seed can be regenerated from these fixed constants).
const STREAM_GRADIENT: u64 = 1;
const STREAM_FINAL: u64 = 2;

// ---------------------------------------------------------------------------
// Policy dispatch
// ---------------------------------------------------------------------------

/// The sampling policy induced by a parameter vector and a constraint: a CB
/// model for an equality budget, a GCB model for an inclusion set (the
/// unconstrained case is the full inclusion set `{0..N}`).
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // built once per iteration; size is immaterial
pub enum Policy {
    /// `||d||_0 = z`.
    Equality(CBModel),
    /// `||d||_0 ∈ Z`.
    Inclusion(GCBModel),
}

impl Policy {
    /// Builds the policy for `probs` under `constraint`.
    ///
    /// # Errors
    /// [`Error::Infeasible`] when the constraint has zero probability under
    /// `probs` (e.g. more forced-one coordinates than the budget allows).
    pub fn new(probs: SuccessProbabilities, constraint: &ConstraintSpec) -> Result<Self> {
        match constraint {
            ConstraintSpec::Equality { z } => Ok(Policy::Equality(CBModel::new(probs, *z)?)),
            other => {
                let budgets = other.budgets(probs.len())?;
                Ok(Policy::Inclusion(GCBModel::new(probs, budgets)?))
            }
        }
    }

    /// The parameter vector.
    #[must_use]
    pub fn probs(&self) -> &SuccessProbabilities {
        match self {
            Policy::Equality(m) => m.probs(),
            Policy::Inclusion(m) => m.probs(),
        }
    }

    /// Number of trials.
    #[must_use]
    pub fn dimension(&self) -> usize {
        self.probs().len()
    }

    /// `n` exact draws from the policy.
    ///
    /// # Errors
    /// Numeric-underflow infeasibility from the q-matrix tabulation.
    pub fn sample(&self, n: usize, stream: &RandomStream) -> Result<SampleBatch> {
        match self {
            Policy::Equality(m) => cb_sample(m, n, stream),
            Policy::Inclusion(m) => gcb_sample(m, n, stream),
        }
    }

    /// `∇_p log P(d | constraint)`.
    ///
    /// # Errors
    /// [`Error::Domain`] at designs with zero probability.
    pub fn log_grad(&self, d: &[u8]) -> Result<Vec<f64>> {
        match self {
            Policy::Equality(m) => cb_log_grad(m, d),
            Policy::Inclusion(m) => gcb_log_grad(m, d),
        }
    }

    /// Scores (log-gradients) for a whole batch, in batch order.
    fn scores(&self, designs: &[Vec<u8>]) -> Result<Vec<Vec<f64>>> {
        designs.iter().map(|d| self.log_grad(d)).collect()
    }

    /// The optimal-baseline denominator: `N_ens · Σ_i a_i²(π_i − π_i²)`
    /// for an equality budget, or the PB-weighted mixture
    /// `(N_ens / Σ_z P(z)) · Σ_z [Σ_i a_i²(π_i(z) − π_i(z)²)] P(z)` for an
    /// inclusion set, with `a_i = (1+w_i)²/w_i` over non-degenerate
    /// coordinates.
    fn baseline_denominator(&self, n_ens: usize) -> f64 {
        match self {
            Policy::Equality(m) => n_ens as f64 * cb_score_variance(m),
            Policy::Inclusion(m) => {
                let mixture: f64 = (0..m.budgets().len())
                    .filter_map(|k| {
                        m.cb_component(k)
                            .map(|cb| cb_score_variance(cb) * m.pb_values()[k])
                    })
                    .sum();
                n_ens as f64 / m.pb_total() * mixture
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Projector
// ---------------------------------------------------------------------------

/// The scaling projector: returns `s·g` with `s = min{1, min_i s_i}`, where
/// `s_i = (1−p_i)/|g_i|` when the direction-signed unit step at coordinate
/// `i` would exceed 1 and `s_i = p_i/|g_i|` when it would drop below 0.
/// The update `p + η·(±s·g)` then stays in `[0,1]^N` for any `η ∈ (0,1]`.
#[must_use]
pub fn project(p: &[f64], g: &[f64], direction: Direction) -> Vec<f64> {
    let sign = direction.step_sign();
    let mut s = 1.0_f64;
    for (&pi, &gi) in p.iter().zip(g) {
        let step = sign * gi;
        if step == 0.0 {
            continue;
        }
        let target = pi + step;
        if target > 1.0 {
            s = s.min((1.0 - pi) / step.abs());
        } else if target < 0.0 {
            s = s.min(pi / step.abs());
        }
    }
    g.iter().map(|gi| s * gi).collect()
}

// ---------------------------------------------------------------------------
// Gradient estimator and baseline
// ---------------------------------------------------------------------------

fn batch_values(batch: &SampleBatch) -> Result<&[f64]> {
    batch
        .objective_values
        .as_deref()
        .ok_or_else(|| Error::Domain {
            reason: "batch has no objective values attached".to_string(),
        })
}

/// `(1/N_ens) Σ_k (J(d_k) − b) ∇_p log P(d_k | constraint)`, accumulated in
/// batch order (bit-level deterministic).
fn gradient_from_scores(
    scores: &[Vec<f64>],
    values: &[f64],
    baseline: f64,
    dimension: usize,
) -> Vec<f64> {
    let mut g = vec![0.0; dimension];
    for (score, &value) in scores.iter().zip(values) {
        let weight = value - baseline;
        for (gi, si) in g.iter_mut().zip(score) {
            *gi += weight * si;
        }
    }
    let n_ens = scores.len() as f64;
    for gi in &mut g {
        *gi /= n_ens;
    }
    g
}

/// `max{0, Σ_i J(d_i) s_i·t / D}` with `t = Σ_j s_j`, scores restricted to
/// the non-degenerate coordinates, and `D` the policy's denominator.
fn baseline_from_scores(policy: &Policy, scores: &[Vec<f64>], values: &[f64]) -> f64 {
    let free = policy.probs().free();
    if free.is_empty() {
        return 0.0;
    }
    let mut total_score = vec![0.0; free.len()];
    for score in scores {
        for (acc, &i) in total_score.iter_mut().zip(free) {
            *acc += score[i];
        }
    }
    let mut numerator = 0.0;
    for (score, &value) in scores.iter().zip(values) {
        let dot: f64 = free
            .iter()
            .zip(&total_score)
            .map(|(&i, ti)| score[i] * ti)
            .sum();
        numerator += value * dot;
    }
    let denominator = policy.baseline_denominator(scores.len());
    if denominator <= 0.0 {
        return 0.0;
    }
    (numerator / denominator).max(0.0)
}

/// The stochastic policy gradient
/// `(1/N_ens) Σ_k (J(d_k) − b) ∇_p log P(d_k | constraint)` over a batch
/// whose objective values are attached.
///
/// # Errors
/// [`Error::Domain`] when the batch has no objective values or contains a
/// zero-probability design (cannot happen for batches drawn from `policy`).
pub fn stochastic_gradient(
    policy: &Policy,
    batch: &SampleBatch,
    baseline: f64,
) -> Result<Vec<f64>> {
    let values = batch_values(batch)?;
    let scores = policy.scores(&batch.designs)?;
    Ok(gradient_from_scores(
        &scores,
        values,
        baseline,
        policy.dimension(),
    ))
}

/// The estimated variance-optimal scalar baseline
/// `max{0, Σ_{i,j} J(d_i) s_i·s_j / D}` (scores restricted to
/// non-degenerate coordinates; `D` as in [`Policy::baseline_denominator`]).
/// Returns 0 when every success probability is degenerate.
///
/// # Errors
/// As [`stochastic_gradient`].
pub fn optimal_baseline(policy: &Policy, batch: &SampleBatch) -> Result<f64> {
    let values = batch_values(batch)?;
    let scores = policy.scores(&batch.designs)?;
    Ok(baseline_from_scores(policy, &scores, values))
}

// ---------------------------------------------------------------------------
// Trace types
// ---------------------------------------------------------------------------

/// Why the iteration loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The projected-gradient norm fell below `pgtol`.
    GradientTolerance,
    /// The iteration cap was reached.
    MaxIterations,
    /// A mid-run failure aborted the loop (see `OptimizerTrace::failure`).
    Failed,
}

/// One iteration of the main loop, recorded before the parameter update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Iteration index `n` (0-based).
    pub iteration: usize,
    /// `p^(n)` — the parameters the batch was drawn from.
    pub p: Vec<f64>,
    /// The projected gradient at `p^(n)`.
    pub projected_gradient: Vec<f64>,
    /// Euclidean norm of the projected gradient.
    pub projected_gradient_norm: f64,
    /// The baseline `b` used this iteration.
    pub baseline: f64,
    /// Sample mean of the objective over the batch.
    pub mean_objective: f64,
    /// Best sampled objective value this iteration (per direction).
    pub best_objective: f64,
    /// Cumulative distinct objective evaluations after this iteration.
    pub distinct_evaluations: usize,
}

/// The full record of an optimization run.
#[derive(Debug)]
pub struct OptimizerTrace {
    /// Per-iteration records, in order.
    pub records: Vec<IterationRecord>,
    /// Why the loop ended.
    pub stop_reason: StopReason,
    /// The failure that aborted the run, when `stop_reason` is `Failed`.
    pub failure: Option<Error>,
    /// Best (design, value) over every design evaluated anywhere in the run.
    pub best_along_route: Option<(Vec<u8>, f64)>,
    /// The final parameter vector `p*`.
    pub optimal_policy: Vec<f64>,
    /// The final sample drawn from `p*` (absent after a failure).
    pub final_sample: Option<SampleBatch>,
    /// The returned design `d*`: best of the final sample per direction,
    /// ties broken by lowest canonical key.
    pub returned_design: Option<(Vec<u8>, f64)>,
    /// Distinct designs evaluated across the whole run.
    pub distinct_evaluations: usize,
    /// Objective lookups answered from the cache.
    pub cache_hits: u64,
    /// Total objective lookups (hits + misses).
    pub evaluation_requests: u64,
    /// The seed the run was driven by.
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

/// Tracks the best evaluated design per the configured direction (first
/// winner kept on exact ties).
fn observe_best(
    best: &mut Option<(Vec<u8>, f64)>,
    direction: Direction,
    designs: &[Vec<u8>],
    values: &[f64],
) {
    for (d, &v) in designs.iter().zip(values) {
        let improves = match best.as_ref() {
            Some((_, incumbent)) => direction.improves(v, *incumbent),
            None => true,
        };
        if improves {
            *best = Some((d.clone(), v));
        }
    }
}

/// Runs projected stochastic gradient ascent/descent (Algorithm: sample →
/// baseline → gradient → project → record → tolerance test → step), then
/// draws `final_sample_size` designs from `p*` and returns the best as
/// `d*`. Every objective evaluation is routed through an
/// [`EvaluationCache`], and `best_along_route` is updated wherever a value
/// materializes.
///
/// # Errors
/// [`Error::InvalidConfig`] / [`Error::DimensionMismatch`] for bad
/// configuration and [`Error::Infeasible`] when the constraint is
/// unsatisfiable at the initial parameters. Failures *after* the run starts
/// (objective errors, a policy driven infeasible) do not error: the partial
/// trace is returned with [`StopReason::Failed`] and the cause in
/// `OptimizerTrace::failure`.
pub fn run(
    objective: &dyn Objective,
    constraint: &ConstraintSpec,
    config: &OptimizerConfig,
) -> Result<OptimizerTrace> {
    config.validate()?;
    let n = objective.dimension();
    let mut p = config.initial_p.materialize(n)?;
    constraint.budgets(n)?;
    // Surface an unsatisfiable constraint as a hard error before looping.
    Policy::new(SuccessProbabilities::new(p.clone())?, constraint)?;

    let root = RandomStream::new(config.seed);
    let gradient_root = root.derive(STREAM_GRADIENT);
    let final_stream = root.derive(STREAM_FINAL);
    let cache = EvaluationCache::new();
    let mut best: Option<(Vec<u8>, f64)> = None;
    let mut records: Vec<IterationRecord> = Vec::with_capacity(config.max_iterations);
    let mut stop_reason = StopReason::MaxIterations;
    let mut failure: Option<Error> = None;

    'iterations: for iteration in 0..config.max_iterations {
        // Mid-run failures abort with the partial trace; `p` stays in the
        // box by construction, so SuccessProbabilities cannot fail here.
        let probs = SuccessProbabilities::new(p.clone())?;
        let step_result: Result<()> = (|| {
            let policy = Policy::new(probs, constraint)?;
            let mut batch =
                policy.sample(config.sample_size, &gradient_root.derive(iteration as u64))?;
            let values = cache.evaluate_batch(objective, &batch.designs)?;
            observe_best(&mut best, config.direction, &batch.designs, &values);
            let scores = policy.scores(&batch.designs)?;
            let baseline = if config.use_baseline {
                baseline_from_scores(&policy, &scores, &values)
            } else {
                0.0
            };
            let gradient = gradient_from_scores(&scores, &values, baseline, n);
            let projected = project(&p, &gradient, config.direction);
            let pg_norm = projected.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mean_objective = values.iter().sum::<f64>() / values.len() as f64;
            let best_objective = values
                .iter()
                .copied()
                .reduce(|a, b| {
                    if config.direction.improves(b, a) {
                        b
                    } else {
                        a
                    }
                })
                .expect("sample_size ≥ 1");
            batch.attach_values(values)?;
            records.push(IterationRecord {
                iteration,
                p: p.clone(),
                projected_gradient: projected.clone(),
                projected_gradient_norm: pg_norm,
                baseline,
                mean_objective,
                best_objective,
                distinct_evaluations: cache.len(),
            });
            // `<=` so that an exactly-zero projected gradient (a fully
            // collapsed policy) stops even under pgtol = 0.
            if pg_norm <= config.pgtol {
                stop_reason = StopReason::GradientTolerance;
                return Ok(());
            }
            let eta = if config.decay_learning_rate {
                config.learning_rate / (1.0 + iteration as f64)
            } else {
                config.learning_rate
            };
            let sign = config.direction.step_sign();
            for (pi, pgi) in p.iter_mut().zip(&projected) {
                // The projector keeps the update inside the box up to
                // floating-point rounding; the clamp removes the rounding.
                *pi = (*pi + eta * sign * pgi).clamp(0.0, 1.0);
            }
            Ok(())
        })();
        match step_result {
            Ok(()) if stop_reason == StopReason::GradientTolerance => break 'iterations,
            Ok(()) => {}
            Err(e) => {
                stop_reason = StopReason::Failed;
                failure = Some(e);
                break 'iterations;
            }
        }
    }

    // Final sampling from p*, skipped after a failure.
    let mut final_sample = None;
    let mut returned_design = None;
    if failure.is_none() {
        let final_result: Result<()> = (|| {
            let policy = Policy::new(SuccessProbabilities::new(p.clone())?, constraint)?;
            let mut batch = policy.sample(config.final_sample_size, &final_stream)?;
            let values = cache.evaluate_batch(objective, &batch.designs)?;
            observe_best(&mut best, config.direction, &batch.designs, &values);
            let mut best_index = 0;
            for k in 1..batch.designs.len() {
                let better = config.direction.improves(values[k], values[best_index]);
                let tie_break = values[k] == values[best_index]
                    && design::canonical_cmp(&batch.designs[k], &batch.designs[best_index])
                        == Ordering::Less;
                if better || tie_break {
                    best_index = k;
                }
            }
            returned_design = Some((batch.designs[best_index].clone(), values[best_index]));
            batch.attach_values(values)?;
            final_sample = Some(batch);
            Ok(())
        })();
        if let Err(e) = final_result {
            stop_reason = StopReason::Failed;
            failure = Some(e);
        }
    }

    Ok(OptimizerTrace {
        records,
        stop_reason,
        failure,
        best_along_route: best,
        optimal_policy: p,
        final_sample,
        returned_design,
        distinct_evaluations: cache.len(),
        cache_hits: cache.hits(),
        evaluation_requests: cache.hits() + cache.misses(),
        seed: config.seed,
    })
}
