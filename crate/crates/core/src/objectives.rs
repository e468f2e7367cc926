//! Objective functions: built-in test problems and an external-process bridge.
//!
//! Everything the optimizer and the brute-force oracle score implements
//! [`Objective`]: a deterministic map from a binary design to a real value.
//! Three implementations ship with the crate:
//!
//! * [`BilinearObjective`] — the alternating-sign linear benchmark
//!   `J(d) = Σ_i (−1)^{i+1} d_i` (0-based entry 0 carries −1).
//! * [`TraceFIMProblem`] — A-optimal sensor placement: the trace of the
//!   Fisher information of a linear-Gaussian model restricted to the
//!   observation rows owned by active sensors.
//! * [`ExternalObjective`] — a pool of worker subprocesses speaking the line
//!   protocol below, for truly black-box objectives.
//!
//! # External bridge line protocol
//!
//! ```text
//! parent → worker:   HELLO <N>\n            (once, at startup)
//! worker → parent:   READY\n
//! parent → worker:   EVAL <N> <bitstring>\n (repeated; bit 0 first)
//! worker → parent:   VAL <decimal real>\n
//! parent → worker:   BYE\n                  (then the worker exits)
//! ```
//!
//! Framing is exact: one message per `\n`-terminated line, fields separated
//! by single spaces. Protocol violations, worker exits, and non-finite
//! values are reported as distinct errors.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::design;
use crate::error::Error;
use crate::Result;

/// A deterministic objective over binary designs of a fixed dimension.
pub trait Objective: Send + Sync {
    /// Number of design entries `N`.
    fn dimension(&self) -> usize;

    /// Scores one design.
    ///
    /// # Errors
    /// [`Error::DimensionMismatch`] / [`Error::Domain`] on malformed input;
    /// bridge-backed objectives also surface protocol and worker failures.
    fn evaluate(&self, design: &[u8]) -> Result<f64>;

    /// Short identifying name (metadata for artifacts and logs).
    fn name(&self) -> &str;
}

/// Validates that `design` is binary and matches the objective dimension.
fn check_design(dimension: usize, design: &[u8]) -> Result<()> {
    if design.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            actual: design.len(),
        });
    }
    design::validate_design(design)
}

// ---------------------------------------------------------------------------
// Bilinear benchmark
// ---------------------------------------------------------------------------

/// Value of the alternating-sign benchmark `Σ_i (−1)^{i+1} d_i` (1-based
/// sign convention: entries at odd 1-based positions count −1, even +1).
///
/// Under an equality budget `z` the maximum is `min(z, ⌊N/2⌋)`, attained by
/// activating only +1 positions.
#[must_use]
pub fn bilinear_eval(design: &[u8]) -> f64 {
    let mut value = 0.0;
    for (i, &d) in design.iter().enumerate() {
        if d == 1 {
            // 0-based even index == 1-based odd position → sign −1.
            value += if i % 2 == 0 { -1.0 } else { 1.0 };
        }
    }
    value
}

/// The alternating-sign linear benchmark as an [`Objective`].
#[derive(Debug, Clone)]
pub struct BilinearObjective {
    n: usize,
}

impl BilinearObjective {
    /// Benchmark over `n` design entries.
    #[must_use]
    pub fn new(n: usize) -> Self {
        BilinearObjective { n }
    }
}

impl Objective for BilinearObjective {
    fn dimension(&self) -> usize {
        self.n
    }

    fn evaluate(&self, design: &[u8]) -> Result<f64> {
        check_design(self.n, design)?;
        Ok(bilinear_eval(design))
    }

    fn name(&self) -> &str {
        "bilinear"
    }
}

// ---------------------------------------------------------------------------
// Trace-FIM sensor placement
// ---------------------------------------------------------------------------

/// A-optimal sensor-placement objective.
///
/// A design activates sensors; each sensor owns a block of observation rows
/// of the forward matrix `F` (`n_obs × n_param`). With observation noise
/// `Γ = σ²I` and the row mask `m` induced by the design, the objective is
///
/// ```text
/// J(d) = Trace( Fᵀ (diag(m) Γ diag(m))⁺ F )
/// ```
///
/// Because the masked covariance is diagonal, its Moore–Penrose
/// pseudo-inverse is exact (entrywise reciprocal of the nonzero diagonal),
/// and the trace collapses to the row-sum shortcut
/// `σ⁻² Σ_{rows r of active sensors} ‖F_r‖²`. Both paths are implemented;
/// [`Objective::evaluate`] uses the shortcut and
/// [`TraceFIMProblem::eval_pinv`] the full matrix contraction. They agree to
/// ~1e−10 and the objective is monotone nondecreasing in the active set.
#[derive(Debug, Clone)]
pub struct TraceFIMProblem {
    forward: Array2<f64>,
    sigma: f64,
    sensor_rows: Vec<Vec<usize>>,
    /// Per sensor: Σ_{r ∈ rows} ‖F_r‖², precomputed for the shortcut path.
    row_norm_sums: Vec<f64>,
}

impl TraceFIMProblem {
    /// Builds a problem from a forward matrix, noise level, and the
    /// partition of observation rows into sensor-owned blocks.
    ///
    /// # Errors
    /// [`Error::InvalidConfig`] when `sigma ≤ 0`, a row index is out of
    /// range, or the blocks do not partition the rows exactly.
    pub fn new(forward: Array2<f64>, sigma: f64, sensor_rows: Vec<Vec<usize>>) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::InvalidConfig {
                reason: format!("noise standard deviation must be positive, got {sigma}"),
            });
        }
        let n_obs = forward.nrows();
        let mut seen = vec![false; n_obs];
        for rows in &sensor_rows {
            for &r in rows {
                if r >= n_obs {
                    return Err(Error::InvalidConfig {
                        reason: format!("sensor row {r} out of range (n_obs = {n_obs})"),
                    });
                }
                if seen[r] {
                    return Err(Error::InvalidConfig {
                        reason: format!("observation row {r} assigned to more than one sensor"),
                    });
                }
                seen[r] = true;
            }
        }
        if let Some(r) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidConfig {
                reason: format!("observation row {r} not assigned to any sensor"),
            });
        }
        let row_norm_sums = sensor_rows
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|&r| forward.row(r).iter().map(|v| v * v).sum::<f64>())
                    .sum()
            })
            .collect();
        Ok(TraceFIMProblem {
            forward,
            sigma,
            sensor_rows,
            row_norm_sums,
        })
    }

    /// Deterministic synthetic instance: standard-normal entries scaled per
    /// row by `exp(−decay · r)`, contiguous equal-size row blocks.
    #[must_use]
    pub fn synthetic(
        n_sensors: usize,
        rows_per_sensor: usize,
        n_param: usize,
        sigma: f64,
        decay: f64,
        seed: u64,
    ) -> Self {
        let n_obs = n_sensors * rows_per_sensor;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut forward = Array2::zeros((n_obs, n_param));
        for r in 0..n_obs {
            let scale = (-decay * r as f64).exp();
            for c in 0..n_param {
                let g: f64 = rng.sample(StandardNormal);
                forward[[r, c]] = scale * g;
            }
        }
        let sensor_rows = (0..n_sensors)
            .map(|s| (s * rows_per_sensor..(s + 1) * rows_per_sensor).collect())
            .collect();
        TraceFIMProblem::new(forward, sigma, sensor_rows)
            .expect("synthetic construction is valid by construction")
    }

    /// Number of observation rows.
    #[must_use]
    pub fn n_obs(&self) -> usize {
        self.forward.nrows()
    }

    /// Number of model parameters (columns of `F`).
    #[must_use]
    pub fn n_param(&self) -> usize {
        self.forward.ncols()
    }

    /// Row-sum shortcut: `σ⁻² Σ_{active sensors} Σ_{owned rows} ‖F_r‖²`.
    ///
    /// # Errors
    /// Input validation only (see [`Objective::evaluate`]).
    pub fn eval_row_sum(&self, design: &[u8]) -> Result<f64> {
        check_design(self.sensor_rows.len(), design)?;
        let total: f64 = design
            .iter()
            .zip(&self.row_norm_sums)
            .filter(|(&d, _)| d == 1)
            .map(|(_, s)| s)
            .sum();
        Ok(total / (self.sigma * self.sigma))
    }

    /// Full pseudo-inverse contraction `Trace(Fᵀ (diag(m) Γ diag(m))⁺ F)`.
    ///
    /// The design is expanded to the observation-row mask `m`, the masked
    /// covariance assembled, pseudo-inverted (diagonal, hence exact), and the
    /// trace taken of the explicit triple product.
    ///
    /// # Errors
    /// Input validation only.
    pub fn eval_pinv(&self, design: &[u8]) -> Result<f64> {
        check_design(self.sensor_rows.len(), design)?;
        let n_obs = self.n_obs();
        let mut mask = vec![0.0; n_obs];
        for (s, rows) in self.sensor_rows.iter().enumerate() {
            if design[s] == 1 {
                for &r in rows {
                    mask[r] = 1.0;
                }
            }
        }
        let mut masked_cov = Array2::zeros((n_obs, n_obs));
        for r in 0..n_obs {
            masked_cov[[r, r]] = mask[r] * self.sigma * self.sigma * mask[r];
        }
        // Moore–Penrose pseudo-inverse of a diagonal matrix: entrywise
        // reciprocal of the nonzero diagonal.
        let mut pinv = Array2::zeros((n_obs, n_obs));
        for r in 0..n_obs {
            if masked_cov[[r, r]] != 0.0 {
                pinv[[r, r]] = 1.0 / masked_cov[[r, r]];
            }
        }
        let fim = self.forward.t().dot(&pinv).dot(&self.forward);
        Ok(fim.diag().sum())
    }
}

impl Objective for TraceFIMProblem {
    fn dimension(&self) -> usize {
        self.sensor_rows.len()
    }

    fn evaluate(&self, design: &[u8]) -> Result<f64> {
        self.eval_row_sum(design)
    }

    fn name(&self) -> &str {
        "trace-fim"
    }
}

/// Convenience wrapper matching the shortcut path of
/// [`TraceFIMProblem::eval_row_sum`].
///
/// # Errors
/// As [`TraceFIMProblem::eval_row_sum`].
pub fn trace_fim_eval(problem: &TraceFIMProblem, design: &[u8]) -> Result<f64> {
    problem.eval_row_sum(design)
}

// ---------------------------------------------------------------------------
// External bridge
// ---------------------------------------------------------------------------

/// Writes one protocol line (appends the terminating newline). A broken
/// pipe means the peer is gone and is reported as a worker exit.
fn send_line<W: Write>(writer: &mut W, line: &str) -> Result<()> {
    let io_result = writer
        .write_all(line.as_bytes())
        .and_then(|()| writer.write_all(b"\n"))
        .and_then(|()| writer.flush());
    io_result.map_err(|e| match e.kind() {
        std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => {
            Error::WorkerExited {
                detail: format!("pipe closed while sending {line:?}: {e}"),
            }
        }
        _ => Error::Io(e),
    })
}

/// Reads one `\n`-terminated protocol line; EOF is a worker exit.
fn recv_line<R: BufRead>(reader: &mut R, waiting_for: &str) -> Result<String> {
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(|e| match e.kind() {
        std::io::ErrorKind::BrokenPipe
        | std::io::ErrorKind::ConnectionReset
        | std::io::ErrorKind::ConnectionAborted
        | std::io::ErrorKind::UnexpectedEof => Error::WorkerExited {
            detail: format!("pipe closed while waiting for {waiting_for}: {e}"),
        },
        _ => Error::Io(e),
    })?;
    if n == 0 {
        return Err(Error::WorkerExited {
            detail: format!("eof while waiting for {waiting_for}"),
        });
    }
    if !line.ends_with('\n') {
        return Err(Error::Protocol {
            detail: format!("unterminated line while waiting for {waiting_for}: {line:?}"),
        });
    }
    line.pop();
    Ok(line)
}

/// Client half of the bridge protocol, generic over the transport so the
/// same codec drives subprocess pipes and in-process streams.
pub struct BridgeClient<R: BufRead, W: Write> {
    reader: R,
    writer: W,
    dimension: usize,
}

impl<R: BufRead, W: Write> BridgeClient<R, W> {
    /// Performs the `HELLO <N>` / `READY` handshake.
    ///
    /// # Errors
    /// [`Error::Protocol`] when the worker answers anything but `READY`;
    /// [`Error::WorkerExited`] on EOF; [`Error::Io`] on transport failure.
    pub fn handshake(mut reader: R, mut writer: W, dimension: usize) -> Result<Self> {
        send_line(&mut writer, &format!("HELLO {dimension}"))?;
        let line = recv_line(&mut reader, "READY")?;
        if line != "READY" {
            return Err(Error::Protocol {
                detail: format!("expected READY, got {line:?}"),
            });
        }
        Ok(BridgeClient {
            reader,
            writer,
            dimension,
        })
    }

    /// Requests one evaluation: `EVAL <N> <bitstring>` → `VAL <value>`.
    ///
    /// # Errors
    /// [`Error::Protocol`] on malformed responses, [`Error::NonFiniteValue`]
    /// when the value text parses to NaN/±∞, [`Error::WorkerExited`] on EOF.
    pub fn eval(&mut self, design: &[u8]) -> Result<f64> {
        check_design(self.dimension, design)?;
        let request = format!("EVAL {} {}", self.dimension, design::bitstring(design));
        send_line(&mut self.writer, &request)?;
        let line = recv_line(&mut self.reader, "VAL")?;
        let Some(value_text) = line.strip_prefix("VAL ") else {
            return Err(Error::Protocol {
                detail: format!("expected VAL <value>, got {line:?}"),
            });
        };
        if value_text.contains(' ') {
            return Err(Error::Protocol {
                detail: format!("trailing tokens after value: {line:?}"),
            });
        }
        let value: f64 = value_text.parse().map_err(|_| Error::Protocol {
            detail: format!("unparseable value: {line:?}"),
        })?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                value_text: value_text.to_string(),
            });
        }
        Ok(value)
    }

    /// Sends `BYE`, ending the session.
    ///
    /// # Errors
    /// [`Error::Io`] on transport failure.
    pub fn shutdown(mut self) -> Result<()> {
        send_line(&mut self.writer, "BYE")
    }
}

/// Serves an [`Objective`] over the bridge protocol (the worker half).
///
/// Useful for writing worker processes in Rust and for loopback tests.
/// Returns after `BYE` or EOF.
///
/// # Errors
/// [`Error::Protocol`] on malformed requests or a dimension mismatch in the
/// handshake; evaluation errors propagate.
pub fn serve<R: BufRead, W: Write>(
    objective: &dyn Objective,
    mut reader: R,
    mut writer: W,
) -> Result<()> {
    let hello = recv_line(&mut reader, "HELLO")?;
    let n: usize = hello
        .strip_prefix("HELLO ")
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Protocol {
            detail: format!("expected HELLO <N>, got {hello:?}"),
        })?;
    if n != objective.dimension() {
        return Err(Error::Protocol {
            detail: format!(
                "dimension mismatch: client announced {n}, objective has {}",
                objective.dimension()
            ),
        });
    }
    send_line(&mut writer, "READY")?;
    loop {
        let line = match recv_line(&mut reader, "EVAL or BYE") {
            Ok(line) => line,
            Err(Error::WorkerExited { .. }) => return Ok(()), // client hung up
            Err(e) => return Err(e),
        };
        if line == "BYE" {
            return Ok(());
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 || fields[0] != "EVAL" {
            return Err(Error::Protocol {
                detail: format!("expected EVAL <N> <bitstring>, got {line:?}"),
            });
        }
        let req_n: usize = fields[1].parse().map_err(|_| Error::Protocol {
            detail: format!("unparseable dimension in {line:?}"),
        })?;
        let design = design::parse_bitstring(fields[2])?;
        if req_n != n || design.len() != n {
            return Err(Error::Protocol {
                detail: format!("request dimension disagrees with handshake in {line:?}"),
            });
        }
        let value = objective.evaluate(&design)?;
        send_line(&mut writer, &format!("VAL {value}"))?;
    }
}

type ChildClient = BridgeClient<BufReader<ChildStdout>, ChildStdin>;

struct Worker {
    child: Child,
    client: Option<ChildClient>,
}

impl Worker {
    fn spawn(command: &[String], dimension: usize, working_dir: Option<&Path>) -> Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| Error::InvalidConfig {
            reason: "external objective command must not be empty".into(),
        })?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped());
        if let Some(dir) = working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| Error::WorkerExited {
            detail: format!("failed to spawn {program:?}: {e}"),
        })?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");
        let client = BridgeClient::handshake(BufReader::new(stdout), stdin, dimension)?;
        Ok(Worker {
            child,
            client: Some(client),
        })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        // Best effort: ask the worker to exit, give it a moment, then kill.
        if let Some(client) = self.client.take() {
            let _ = client.shutdown();
        }
        let deadline = Instant::now() + Duration::from_millis(200);
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(10));
                }
                _ => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Black-box objective evaluated by a pool of worker subprocesses.
///
/// Requests to one worker are serialized (each worker sits behind a mutex);
/// concurrent evaluations spread over the pool round-robin.
pub struct ExternalObjective {
    dimension: usize,
    workers: Vec<Mutex<Worker>>,
    next: AtomicUsize,
    name: String,
}

impl ExternalObjective {
    /// Spawns `pool_size` workers running `command` and completes the
    /// handshake with each. The workers inherit this process's working
    /// directory.
    ///
    /// # Errors
    /// [`Error::InvalidConfig`] for an empty command or zero pool;
    /// handshake/spawn failures as in [`BridgeClient::handshake`].
    pub fn spawn(command: &[String], dimension: usize, pool_size: usize) -> Result<Self> {
        Self::spawn_in(command, dimension, pool_size, None)
    }

    /// Like [`ExternalObjective::spawn`], but runs the workers in
    /// `working_dir` so that relative paths on the command line resolve
    /// against it.
    ///
    /// # Errors
    /// As [`ExternalObjective::spawn`].
    pub fn spawn_in(
        command: &[String],
        dimension: usize,
        pool_size: usize,
        working_dir: Option<&Path>,
    ) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::InvalidConfig {
                reason: "external objective pool must have at least one worker".into(),
            });
        }
        let workers = (0..pool_size)
            .map(|_| Worker::spawn(command, dimension, working_dir).map(Mutex::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExternalObjective {
            dimension,
            workers,
            next: AtomicUsize::new(0),
            name: format!("external:{}", command.join(" ")),
        })
    }
}

impl Objective for ExternalObjective {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, design: &[u8]) -> Result<f64> {
        let k = self.next.fetch_add(1, Ordering::Relaxed) % self.workers.len();
        let mut worker = self.workers[k].lock().map_err(|_| Error::Objective {
            reason: "bridge worker mutex poisoned by an earlier panic".into(),
        })?;
        match worker.client.as_mut() {
            Some(client) => client.eval(design),
            None => Err(Error::WorkerExited {
                detail: "worker already shut down".into(),
            }),
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}
