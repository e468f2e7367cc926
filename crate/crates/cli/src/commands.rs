//! Subcommand implementations. Each returns the process exit code on
//! success; failures carry their own code (see [`Failure`]).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use cbopt_core::design::bitstring;
use cbopt_core::distributions::SuccessProbabilities;
use cbopt_core::optimizer::{run, Direction, Policy};
use cbopt_core::oracle::{binomial_f64, FeasibleEnumeration};
use cbopt_core::sampling::RandomStream;
use cbopt_core::verify::run_default_suite;

use crate::artifacts::{render_result, render_samples, render_trace, stop_reason_label};
use crate::config::load_config;
use crate::failure::Failure;

/// Runs the optimizer end to end and writes the trace and result artifacts.
///
/// # Errors
/// Config/schema problems (exit 2), infeasible constraints (exit 3), or
/// objective/bridge failures (exit 4). A mid-run objective failure still
/// writes the partial trace before returning.
pub fn cmd_optimize(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<u8, Failure> {
    let loaded = load_config(config_path)?;
    let objective = loaded.run.build_objective(&loaded.base_dir)?;
    let constraint = loaded.run.constraint()?;
    let optimizer_config = loaded.run.optimizer_config(seed);
    let direction = optimizer_config.direction;

    let trace = run(objective.as_ref(), &constraint, &optimizer_config).map_err(Failure::from)?;

    fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join(&loaded.run.output.trace);
    fs::write(&trace_path, render_trace(&trace))?;

    if let Some(err) = trace.failure {
        let inner = Failure::from(err);
        return Err(Failure {
            code: inner.code,
            message: format!(
                "optimization aborted after {} iterations (partial trace at {}): {}",
                trace.records.len(),
                trace_path.display(),
                inner.message
            ),
        });
    }

    let dimension = trace.optimal_policy.len();
    let feasible: f64 = constraint
        .budgets(dimension)
        .map_err(Failure::from)?
        .iter()
        .map(|&z| binomial_f64(dimension, z))
        .sum();
    let result_path = out_dir.join(&loaded.run.output.result);
    fs::write(
        &result_path,
        render_result(&trace, objective.name(), direction, feasible),
    )?;

    println!("seed:                 {}", trace.seed);
    println!(
        "stop reason:          {} after {} iterations",
        stop_reason_label(trace.stop_reason),
        trace.records.len()
    );
    if let Some((design, value)) = &trace.returned_design {
        println!("returned design:      {} (J = {value})", bitstring(design));
    }
    if let Some((design, value)) = &trace.best_along_route {
        println!("best along route:     {} (J = {value})", bitstring(design));
    }
    println!(
        "distinct evaluations: {} ({} requests, {} cache hits)",
        trace.distinct_evaluations, trace.evaluation_requests, trace.cache_hits
    );
    println!(
        "explored:             {:.3e}% of {:.6e} feasible designs",
        trace.distinct_evaluations as f64 / feasible * 100.0,
        feasible
    );
    println!("trace:                {}", trace_path.display());
    println!("result:               {}", result_path.display());
    Ok(0)
}

/// Enumerates the feasible set, evaluates every design, and writes the full
/// `index,design,value` table.
///
/// # Errors
/// As [`cmd_optimize`]; additionally exit 2 when the feasible set exceeds
/// the enumeration cap.
pub fn cmd_brute_force(config_path: &Path, out_dir: &Path) -> Result<u8, Failure> {
    let loaded = load_config(config_path)?;
    let objective = loaded.run.build_objective(&loaded.base_dir)?;
    let constraint = loaded.run.constraint()?;
    let direction = loaded.run.optimizer_config(None).direction;
    let dimension = objective.dimension();

    let enumeration = FeasibleEnumeration::new(&constraint, dimension).map_err(Failure::from)?;
    fs::create_dir_all(out_dir)?;
    let table_path = out_dir.join(&loaded.run.output.table);
    let file = fs::File::create(&table_path)?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "index,design,value")?;

    let mut rows = 0usize;
    let mut best: Option<(Vec<u8>, f64)> = None;
    for (index, design) in enumeration.enumerate() {
        let value = objective.evaluate(&design).map_err(Failure::from)?;
        writeln!(writer, "{index},{},{value}", bitstring(&design))?;
        let improves = match &best {
            Some((_, incumbent)) => direction.improves(value, *incumbent),
            None => true,
        };
        if improves {
            best = Some((design, value));
        }
        rows = index + 1;
    }
    writer.flush()?;

    let (best_design, best_value) = best.ok_or_else(|| Failure::config("feasible set is empty"))?;
    println!("feasible designs:  {rows}");
    println!(
        "optimum ({}):  {} (J = {best_value})",
        match direction {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        },
        bitstring(&best_design)
    );
    println!("table:             {}", table_path.display());
    Ok(0)
}

/// Draws designs from the configured initial policy and writes them with
/// per-row constraint verification.
///
/// # Errors
/// As [`cmd_optimize`].
pub fn cmd_sample(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<u8, Failure> {
    let loaded = load_config(config_path)?;
    let dimension = loaded.run.declared_dimension(&loaded.base_dir)?;
    let constraint = loaded.run.constraint()?;
    let optimizer_config = loaded.run.optimizer_config(seed);
    let probs = optimizer_config
        .initial_p
        .materialize(dimension)
        .and_then(SuccessProbabilities::new)
        .map_err(Failure::from)?;
    let policy = Policy::new(probs, &constraint).map_err(Failure::from)?;

    let stream = RandomStream::new(optimizer_config.seed);
    let count = loaded.run.sample.count;
    let batch = policy.sample(count, &stream).map_err(Failure::from)?;

    let budgets = constraint.budgets(dimension).map_err(Failure::from)?;
    let violations = batch
        .designs
        .iter()
        .filter(|d| !budgets.contains(&cbopt_core::design::popcount(d)))
        .count();

    fs::create_dir_all(out_dir)?;
    let samples_path = out_dir.join(&loaded.run.output.samples);
    fs::write(&samples_path, render_samples(&batch.designs, &budgets))?;

    println!("designs drawn:         {count}");
    println!("constraint violations: {violations}");
    println!("samples:               {}", samples_path.display());
    Ok(0)
}

/// Runs the named self-check suite, printing one PASS/FAIL line per check
/// and a summary count. Exit code 0 when every check passes, 1 otherwise.
///
/// # Errors
/// Config/schema problems only (the suite itself reports through the exit
/// code, not through errors).
pub fn cmd_check(config_path: Option<&Path>, seed: Option<u64>) -> Result<u8, Failure> {
    let config_seed = match config_path {
        Some(path) => Some(load_config(path)?.run.seed),
        None => None,
    };
    let suite_seed = seed.or(config_seed).unwrap_or(0);

    let results = run_default_suite(suite_seed);
    let mut failed = 0usize;
    for r in &results {
        let status = if r.passed {
            "PASS"
        } else {
            failed += 1;
            "FAIL"
        };
        println!("{status}  {:<26} {}", r.name, r.detail);
    }
    println!(
        "{} checks: {} passed, {} failed (seed {suite_seed})",
        results.len(),
        results.len() - failed,
        failed
    );
    Ok(u8::from(failed > 0))
}
