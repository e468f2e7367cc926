//! Projected stochastic gradient ascent over Bernoulli policy parameters.
//!
//! The optimizer treats a budget-constrained binary problem `opt J(d)` over
//! designs `d ∈ {0,1}^N` with `||d||_0` fixed (or restricted to a set) as a
//! continuous problem over success probabilities `p ∈ [0,1]^N`: it ascends
//! the expected objective under the conditional Bernoulli (or generalized
//! conditional Bernoulli) policy using score-function gradient estimates with
//! an optimal scalar baseline, a box projector that rescales steps to stay in
//! `[0,1]^N`, and an evaluation cache so no design is scored twice.

mod cache;
mod config;
mod engine;

pub use cache::EvaluationCache;
pub use config::{ConstraintSpec, Direction, InitialP, OptimizerConfig};
pub use engine::{
    optimal_baseline, project, run, stochastic_gradient, IterationRecord, OptimizerTrace, Policy,
    StopReason,
};
