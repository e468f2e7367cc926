//! Budget-constrained binary optimization with conditional Bernoulli
//! policies.
//!
//! The crate optimizes black-box objectives `J(d)` over binary designs
//! `d ∈ {0,1}^N` whose number of active entries is fixed (`||d||_0 = z`) or
//! restricted to a set (`||d||_0 ∈ Z`), by ascending the expected objective
//! over the parameters of an exactly-constrained probability model:
//!
//! * [`combinatorics`] — Bernoulli weights `w_i = p_i/(1−p_i)`, the
//!   R-function (elementary symmetric polynomials in the weights), and
//!   first/second-order inclusion probabilities with their derivatives.
//! * [`distributions`] — Poisson binomial, conditional Bernoulli (CB), and
//!   generalized conditional Bernoulli (GCB) models: PMFs, gradients,
//!   Hessians, and moments, including all degenerate-parameter boundary
//!   forms.
//! * [`sampling`] — exact CB sampling through the q-matrix of tail-sum
//!   probabilities, PB budget draws, and the two-stage GCB sampler, all
//!   driven by deterministic substreams of a seeded ChaCha20 generator.
//! * [`optimizer`] — projected stochastic gradient ascent with
//!   score-function estimates, an optimal scalar baseline, a box projector,
//!   and an at-most-once evaluation cache.
//! * [`objectives`] — built-in benchmarks (alternating-sign bilinear,
//!   trace-of-FIM sensor placement) and a line-protocol bridge to external
//!   worker processes.
//! * [`oracle`] — exhaustive enumeration, brute-force optima,
//!   finite-difference checks, and statistical test helpers used as ground
//!   truth everywhere.
//! * [`verify`] — the self-check suite behind the CLI `check` subcommand.

pub mod combinatorics;
pub mod design;
pub mod distributions;
pub mod error;
pub mod objectives;
pub mod optimizer;
pub mod oracle;
pub mod sampling;
pub mod verify;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
