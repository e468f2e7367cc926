//! Run-configuration schema: one TOML file, schema-validated with unknown
//! keys rejected, mapped onto library types.
//!
//! ```toml
//! seed = 7
//!
//! [objective.bilinear]
//! n = 20
//!
//! [constraint.equality]
//! z = 10
//!
//! [optimizer]
//! learning_rate = 0.25
//! sample_size = 100
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;

use cbopt_core::objectives::{BilinearObjective, ExternalObjective, Objective, TraceFIMProblem};
use cbopt_core::optimizer::{ConstraintSpec, Direction, InitialP, OptimizerConfig};

use crate::failure::Failure;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// Top-level run configuration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// What to optimize.
    pub objective: ObjectiveSpec,
    /// Feasible-set constraint.
    pub constraint: ConstraintSection,
    /// Optimizer settings; omitted fields take the library defaults.
    #[serde(default)]
    pub optimizer: OptimizerSection,
    /// Single config-level seed; every random stream derives from it.
    #[serde(default)]
    pub seed: u64,
    /// Settings for the `sample` subcommand.
    #[serde(default)]
    pub sample: SampleSection,
    /// Artifact file names, relative to the output directory.
    #[serde(default)]
    pub output: OutputSection,
}

/// Objective selection: exactly one variant.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Alternating-sign bilinear benchmark of dimension `n`.
    Bilinear {
        /// Design dimension.
        n: usize,
    },
    /// Trace-of-FIM sensor placement, from a matrix file or synthetic.
    TraceFim(TraceFimSpec),
    /// External worker processes driven over the line protocol.
    External {
        /// Worker command line (program followed by arguments).
        command: Vec<String>,
        /// Design dimension announced during the handshake.
        dimension: usize,
        /// Number of concurrent worker processes.
        #[serde(default = "default_workers")]
        workers: usize,
    },
}

/// Trace-of-FIM problem source. Either `matrix_file` (with `sigma` and
/// `rows_per_sensor`) or `synthetic` must be given, not both.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFimSpec {
    /// Forward-matrix file: one observation row per line, comma-separated
    /// columns. Relative paths resolve against the config file's directory.
    pub matrix_file: Option<PathBuf>,
    /// Observation noise σ > 0 (matrix-file form).
    pub sigma: Option<f64>,
    /// Contiguous observation rows owned by each sensor (matrix-file form);
    /// must divide the row count exactly.
    pub rows_per_sensor: Option<usize>,
    /// Self-contained synthetic instance.
    pub synthetic: Option<SyntheticTraceFim>,
}

/// Parameters of the deterministic synthetic trace-of-FIM instance.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTraceFim {
    /// Number of sensors (the design dimension).
    pub n_sensors: usize,
    /// Observation rows owned by each sensor.
    pub rows_per_sensor: usize,
    /// Model parameters (columns of the forward matrix).
    pub n_param: usize,
    /// Observation noise σ > 0.
    pub sigma: f64,
    /// Per-row exponential scale decay.
    #[serde(default)]
    pub decay: f64,
    /// Seed of the matrix entries (independent of the run seed).
    #[serde(default)]
    pub seed: u64,
}

/// Constraint selection.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintSection {
    /// Exactly `z` active entries.
    Equality {
        /// Required number of active entries.
        z: usize,
    },
    /// Active-entry count restricted to a set of budgets.
    Inclusion {
        /// Admissible active-entry counts.
        budgets: Vec<usize>,
    },
    /// Any number of active entries.
    Unconstrained,
}

/// `[optimizer]` section; defaults mirror the library defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// Step size η ∈ (0, 1].
    pub learning_rate: f64,
    /// Designs sampled per iteration.
    pub sample_size: usize,
    /// Iteration cap.
    pub max_iterations: usize,
    /// Convergence threshold on the projected-gradient norm.
    pub pgtol: f64,
    /// Designs drawn from the final policy.
    pub final_sample_size: usize,
    /// Optimization sense.
    pub direction: DirectionSpec,
    /// Whether to subtract the optimal scalar baseline.
    pub use_baseline: bool,
    /// Initial success probabilities: scalar fill or explicit vector.
    pub initial_p: InitialPSpec,
    /// Whether to decay the learning rate as η/(1+n).
    pub decay_learning_rate: bool,
}

/// Optimization sense.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSpec {
    /// Ascend the objective.
    Maximize,
    /// Descend the objective.
    Minimize,
}

/// Scalar fill or explicit per-coordinate vector.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialPSpec {
    /// One probability repeated across all coordinates.
    Fill(f64),
    /// Explicit probability vector (length = dimension).
    Vector(Vec<f64>),
}

/// `[sample]` section.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    /// Designs to draw.
    pub count: usize,
}

/// `[output]` section: artifact file names inside the output directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Per-iteration trace (CSV).
    pub trace: String,
    /// Optimization result (JSON).
    pub result: String,
    /// Brute-force enumeration table (CSV).
    pub table: String,
    /// Drawn designs with constraint verification (CSV).
    pub samples: String,
}

fn default_workers() -> usize {
    1
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let lib = OptimizerConfig::default();
        OptimizerSection {
            learning_rate: lib.learning_rate,
            sample_size: lib.sample_size,
            max_iterations: lib.max_iterations,
            pgtol: lib.pgtol,
            final_sample_size: lib.final_sample_size,
            direction: DirectionSpec::Maximize,
            use_baseline: lib.use_baseline,
            initial_p: InitialPSpec::Fill(0.5),
            decay_learning_rate: lib.decay_learning_rate,
        }
    }
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { count: 1000 }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            trace: "trace.csv".into(),
            result: "result.json".into(),
            table: "brute_force.csv".into(),
            samples: "samples.csv".into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Loading and mapping
// ---------------------------------------------------------------------------

/// A parsed config together with the directory it was loaded from, so that
/// relative data paths inside it resolve predictably.
#[derive(Debug)]
pub struct LoadedConfig {
    /// The validated configuration.
    pub run: RunConfig,
    /// Directory containing the config file.
    pub base_dir: PathBuf,
}

/// Reads and schema-validates a config file.
///
/// # Errors
/// [`Failure`] with exit code 2 when the file cannot be read or does not
/// match the schema (unknown keys, missing fields, wrong types).
pub fn load_config(path: &Path) -> Result<LoadedConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    let run: RunConfig = toml::from_str(&text)
        .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))?;
    let base_dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok(LoadedConfig { run, base_dir })
}

impl RunConfig {
    /// Maps the constraint section onto the library type.
    ///
    /// # Errors
    /// [`Failure`] when an inclusion budget list is empty.
    pub fn constraint(&self) -> Result<ConstraintSpec, Failure> {
        match &self.constraint {
            ConstraintSection::Equality { z } => Ok(ConstraintSpec::equality(*z)),
            ConstraintSection::Inclusion { budgets } => {
                ConstraintSpec::inclusion(budgets.iter().copied()).map_err(Failure::from)
            }
            ConstraintSection::Unconstrained => Ok(ConstraintSpec::unconstrained()),
        }
    }

    /// Builds the optimizer configuration, applying a `--seed` override.
    #[must_use]
    pub fn optimizer_config(&self, seed_override: Option<u64>) -> OptimizerConfig {
        let s = &self.optimizer;
        OptimizerConfig {
            learning_rate: s.learning_rate,
            sample_size: s.sample_size,
            max_iterations: s.max_iterations,
            pgtol: s.pgtol,
            final_sample_size: s.final_sample_size,
            direction: match s.direction {
                DirectionSpec::Maximize => Direction::Maximize,
                DirectionSpec::Minimize => Direction::Minimize,
            },
            seed: seed_override.unwrap_or(self.seed),
            use_baseline: s.use_baseline,
            initial_p: match &s.initial_p {
                InitialPSpec::Fill(v) => InitialP::Fill(*v),
                InitialPSpec::Vector(v) => InitialP::Vector(v.clone()),
            },
            decay_learning_rate: s.decay_learning_rate,
        }
    }

    /// Design dimension, computed without spawning workers or building the
    /// objective (reads the matrix file header for the file-backed form).
    ///
    /// # Errors
    /// [`Failure`] when the trace-of-FIM source is inconsistent or the
    /// matrix file is unreadable.
    pub fn declared_dimension(&self, base_dir: &Path) -> Result<usize, Failure> {
        match &self.objective {
            ObjectiveSpec::Bilinear { n } => Ok(*n),
            ObjectiveSpec::External { dimension, .. } => Ok(*dimension),
            ObjectiveSpec::TraceFim(spec) => match (&spec.synthetic, &spec.matrix_file) {
                (Some(s), None) => Ok(s.n_sensors),
                (None, Some(file)) => {
                    let (matrix, rows_per_sensor) = load_forward_matrix(spec, file, base_dir)?;
                    Ok(matrix.nrows() / rows_per_sensor)
                }
                _ => Err(trace_fim_source_error()),
            },
        }
    }

    /// Builds the configured objective. External commands spawn their
    /// worker processes here.
    ///
    /// # Errors
    /// [`Failure`] on inconsistent specs, unreadable matrix files (exit
    /// code 2), or worker spawn/handshake failures (exit code 4).
    pub fn build_objective(&self, base_dir: &Path) -> Result<Box<dyn Objective>, Failure> {
        match &self.objective {
            ObjectiveSpec::Bilinear { n } => Ok(Box::new(BilinearObjective::new(*n))),
            ObjectiveSpec::TraceFim(spec) => match (&spec.synthetic, &spec.matrix_file) {
                (Some(s), None) => Ok(Box::new(TraceFIMProblem::synthetic(
                    s.n_sensors,
                    s.rows_per_sensor,
                    s.n_param,
                    s.sigma,
                    s.decay,
                    s.seed,
                ))),
                (None, Some(file)) => {
                    let (matrix, rows_per_sensor) = load_forward_matrix(spec, file, base_dir)?;
                    let sigma = spec.sigma.ok_or_else(|| {
                        Failure::config("objective.trace-fim: matrix_file requires sigma")
                    })?;
                    let n_obs = matrix.nrows();
                    let sensor_rows: Vec<Vec<usize>> = (0..n_obs / rows_per_sensor)
                        .map(|s| (s * rows_per_sensor..(s + 1) * rows_per_sensor).collect())
                        .collect();
                    TraceFIMProblem::new(matrix, sigma, sensor_rows)
                        .map(|p| Box::new(p) as Box<dyn Objective>)
                        .map_err(Failure::from)
                }
                _ => Err(trace_fim_source_error()),
            },
            ObjectiveSpec::External {
                command,
                dimension,
                workers,
            } => {
                if command.is_empty() {
                    return Err(Failure::config("objective.external: command is empty"));
                }
                if *workers == 0 {
                    return Err(Failure::config("objective.external: workers must be ≥ 1"));
                }
                // Workers run in the config file's directory, so relative
                // paths on the command line resolve against it (matching
                // the `matrix_file` convention).
                ExternalObjective::spawn_in(command, *dimension, *workers, Some(base_dir))
                    .map(|o| Box::new(o) as Box<dyn Objective>)
                    .map_err(Failure::from)
            }
        }
    }
}

fn trace_fim_source_error() -> Failure {
    Failure::config(
        "objective.trace-fim: exactly one of `matrix_file` or `synthetic` must be given",
    )
}

/// Parses the comma-separated forward matrix and validates the sensor-block
/// size against it.
fn load_forward_matrix(
    spec: &TraceFimSpec,
    file: &Path,
    base_dir: &Path,
) -> Result<(Array2<f64>, usize), Failure> {
    let rows_per_sensor = spec.rows_per_sensor.ok_or_else(|| {
        Failure::config("objective.trace-fim: matrix_file requires rows_per_sensor")
    })?;
    if rows_per_sensor == 0 {
        return Err(Failure::config(
            "objective.trace-fim: rows_per_sensor must be ≥ 1",
        ));
    }
    let path = if file.is_absolute() {
        file.to_path_buf()
    } else {
        base_dir.join(file)
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::config(format!("cannot read matrix {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Failure::config(format!(
                "matrix {} line {}: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Failure::config(format!(
                    "matrix {} line {}: expected {} columns, found {}",
                    path.display(),
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::config(format!(
            "matrix {} is empty",
            path.display()
        )));
    }
    if rows.len() % rows_per_sensor != 0 {
        return Err(Failure::config(format!(
            "matrix {}: {} rows are not divisible by rows_per_sensor = {}",
            path.display(),
            rows.len(),
            rows_per_sensor
        )));
    }
    let n_cols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n_rows = flat.len() / n_cols;
    let matrix = Array2::from_shape_vec((n_rows, n_cols), flat)
        .expect("row-major shape matches by construction");
    Ok((matrix, rows_per_sensor))
}
