//! Deterministic artifact rendering: per-iteration trace CSV, result JSON,
//! brute-force tables, and sample listings. Identical inputs render to
//! byte-identical text.

use serde::Serialize;

use cbopt_core::design::{bitstring, popcount};
use cbopt_core::optimizer::{Direction, OptimizerTrace, StopReason};

/// Renders the per-iteration trace as CSV: one row per iteration plus a
/// fixed header of `iteration,pgnorm,baseline,mean_J,best_J,new_evals`
/// followed by the full parameter vector `p_0..p_{N-1}`.
#[must_use]
pub fn render_trace(trace: &OptimizerTrace) -> String {
    let n = trace.optimal_policy.len();
    let mut out = String::new();
    out.push_str("iteration,pgnorm,baseline,mean_J,best_J,new_evals");
    for i in 0..n {
        out.push_str(&format!(",p_{i}"));
    }
    out.push('\n');
    let mut seen = 0usize;
    for record in &trace.records {
        let new_evals = record.distinct_evaluations - seen;
        seen = record.distinct_evaluations;
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            record.iteration,
            record.projected_gradient_norm,
            record.baseline,
            record.mean_objective,
            record.best_objective,
            new_evals
        ));
        for p in &record.p {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct DesignValue {
    design: String,
    value: f64,
    active: usize,
}

impl DesignValue {
    fn from_pair(pair: &(Vec<u8>, f64)) -> Self {
        DesignValue {
            design: bitstring(&pair.0),
            value: pair.1,
            active: popcount(&pair.0),
        }
    }
}

#[derive(Serialize)]
struct EvaluationCounts {
    distinct: usize,
    requests: u64,
    cache_hits: u64,
}

#[derive(Serialize)]
struct ResultFile<'a> {
    seed: u64,
    objective: &'a str,
    dimension: usize,
    direction: &'static str,
    stop_reason: &'static str,
    iterations: usize,
    returned_design: Option<DesignValue>,
    best_along_route: Option<DesignValue>,
    optimal_policy: &'a [f64],
    evaluations: EvaluationCounts,
    feasible_designs: f64,
    explored_percent: f64,
}

/// Human-readable stop-reason label, shared by the result file and the
/// terminal summary.
#[must_use]
pub fn stop_reason_label(reason: StopReason) -> &'static str {
    match reason {
        StopReason::GradientTolerance => "gradient-tolerance",
        StopReason::MaxIterations => "max-iterations",
        StopReason::Failed => "failed",
    }
}

/// Renders the optimization result as pretty-printed JSON with a trailing
/// newline: final policy `p*`, returned design `d*`, best design seen along
/// the route, evaluation counts, the explored share of the feasible set,
/// and the seed.
#[must_use]
pub fn render_result(
    trace: &OptimizerTrace,
    objective: &str,
    direction: Direction,
    feasible_designs: f64,
) -> String {
    let file = ResultFile {
        seed: trace.seed,
        objective,
        dimension: trace.optimal_policy.len(),
        direction: match direction {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        },
        stop_reason: stop_reason_label(trace.stop_reason),
        iterations: trace.records.len(),
        returned_design: trace.returned_design.as_ref().map(DesignValue::from_pair),
        best_along_route: trace.best_along_route.as_ref().map(DesignValue::from_pair),
        optimal_policy: &trace.optimal_policy,
        evaluations: EvaluationCounts {
            distinct: trace.distinct_evaluations,
            requests: trace.evaluation_requests,
            cache_hits: trace.cache_hits,
        },
        feasible_designs,
        explored_percent: trace.distinct_evaluations as f64 / feasible_designs * 100.0,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("plain data serializes");
    text.push('\n');
    text
}

/// Renders drawn designs with constraint verification:
/// `index,design,active,feasible`.
#[must_use]
pub fn render_samples(designs: &[Vec<u8>], budgets: &[usize]) -> String {
    let mut out = String::from("index,design,active,feasible\n");
    for (index, design) in designs.iter().enumerate() {
        let active = popcount(design);
        let feasible = budgets.contains(&active);
        out.push_str(&format!(
            "{index},{},{active},{feasible}\n",
            bitstring(design)
        ));
    }
    out
}
