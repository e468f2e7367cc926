//! Optimizer configuration: constraint kinds, direction, and hyperparameters.

use crate::error::Error;
use crate::Result;

/// Whether the objective is to be maximized or minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Seek the largest objective value.
    Maximize,
    /// Seek the smallest objective value.
    Minimize,
}

impl Direction {
    /// Returns true when `candidate` is strictly better than `incumbent`.
    #[must_use]
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Maximize => candidate > incumbent,
            Direction::Minimize => candidate < incumbent,
        }
    }

    /// Sign applied to the ascent step: `+1` for maximization, `−1` for
    /// minimization.
    #[must_use]
    pub fn step_sign(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }
}

/// Budget constraint on the number of active design entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintSpec {
    /// `||d||_0 = z` exactly.
    Equality {
        /// The required number of ones.
        z: usize,
    },
    /// `||d||_0 ∈ budgets` (nonempty, each within `{0..N}`).
    Inclusion {
        /// Admissible numbers of ones, sorted and deduplicated.
        budgets: Vec<usize>,
    },
    /// No restriction — sugar for inclusion with `budgets = {0..N}`.
    Unconstrained,
}

impl ConstraintSpec {
    /// Equality constraint `||d||_0 = z`.
    #[must_use]
    pub fn equality(z: usize) -> Self {
        ConstraintSpec::Equality { z }
    }

    /// Inclusion constraint `||d||_0 ∈ budgets`.
    ///
    /// # Errors
    /// [`Error::InvalidConfig`] when `budgets` is empty.
    pub fn inclusion<I: IntoIterator<Item = usize>>(budgets: I) -> Result<Self> {
        let mut budgets: Vec<usize> = budgets.into_iter().collect();
        budgets.sort_unstable();
        budgets.dedup();
        if budgets.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "inclusion constraint needs at least one admissible budget".into(),
            });
        }
        Ok(ConstraintSpec::Inclusion { budgets })
    }

    /// No budget restriction.
    #[must_use]
    pub fn unconstrained() -> Self {
        ConstraintSpec::Unconstrained
    }

    /// The admissible budget values for dimension `n`, sorted ascending.
    ///
    /// # Errors
    /// [`Error::Infeasible`] when a required budget exceeds `n`.
    pub fn budgets(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            ConstraintSpec::Equality { z } => {
                if *z > n {
                    Err(Error::Infeasible {
                        reason: format!("budget z = {z} exceeds dimension N = {n}"),
                    })
                } else {
                    Ok(vec![*z])
                }
            }
            ConstraintSpec::Inclusion { budgets } => {
                if let Some(bad) = budgets.iter().find(|&&z| z > n) {
                    return Err(Error::Infeasible {
                        reason: format!("budget {bad} in the inclusion set exceeds N = {n}"),
                    });
                }
                Ok(budgets.clone())
            }
            ConstraintSpec::Unconstrained => Ok((0..=n).collect()),
        }
    }
}

/// Initial policy parameters: a scalar fill or a full vector.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialP {
    /// Every entry starts at the given value.
    Fill(f64),
    /// Explicit per-entry starting values.
    Vector(Vec<f64>),
}

impl InitialP {
    /// Expands to a length-`n` vector.
    ///
    /// # Errors
    /// [`Error::ProbabilityOutOfRange`] for entries outside `[0, 1]`;
    /// [`Error::DimensionMismatch`] when an explicit vector has length ≠ `n`.
    pub fn materialize(&self, n: usize) -> Result<Vec<f64>> {
        let p = match self {
            InitialP::Fill(value) => vec![*value; n],
            InitialP::Vector(values) => {
                if values.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: values.len(),
                    });
                }
                values.clone()
            }
        };
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(Error::ProbabilityOutOfRange { index, value });
            }
        }
        Ok(p)
    }
}

/// Hyperparameters of the projected stochastic gradient run.
///
/// The defaults are the reference settings: learning rate 0.25, ensemble
/// size 100, at most 500 iterations, gradient tolerance 1e−8, final sample of
/// 100 designs, maximization, baseline enabled, and `p^(0) = 0.5` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Step size η ∈ (0, 1]. With η ≤ 1 the projected step cannot leave the
    /// box (the projector scales the raw step to the nearest face and the box
    /// is convex).
    pub learning_rate: f64,
    /// Ensemble size N_ens: designs sampled per iteration.
    pub sample_size: usize,
    /// Iteration cap.
    pub max_iterations: usize,
    /// Stop once the Euclidean norm of the projected gradient drops below
    /// this tolerance.
    pub pgtol: f64,
    /// Designs drawn from the converged policy to pick the returned design.
    pub final_sample_size: usize,
    /// Maximize or minimize.
    pub direction: Direction,
    /// Root seed; every random draw in the run derives from it.
    pub seed: u64,
    /// Subtract the variance-minimizing scalar baseline from objective values
    /// inside the gradient estimator.
    pub use_baseline: bool,
    /// Starting policy.
    pub initial_p: InitialP,
    /// Optional inverse-iteration decay: at iteration n (0-based) the step
    /// size becomes `learning_rate / (1 + n)`.
    pub decay_learning_rate: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.25,
            sample_size: 100,
            max_iterations: 500,
            pgtol: 1e-8,
            final_sample_size: 100,
            direction: Direction::Maximize,
            seed: 0,
            use_baseline: true,
            initial_p: InitialP::Fill(0.5),
            decay_learning_rate: false,
        }
    }
}

impl OptimizerConfig {
    /// Validates hyperparameter ranges (not the dimension-dependent parts —
    /// see [`InitialP::materialize`] for those).
    ///
    /// # Errors
    /// [`Error::InvalidConfig`] naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "learning_rate must be in (0, 1], got {}",
                    self.learning_rate
                ),
            });
        }
        if self.sample_size == 0 {
            return Err(Error::InvalidConfig {
                reason: "sample_size must be at least 1".into(),
            });
        }
        if self.final_sample_size == 0 {
            return Err(Error::InvalidConfig {
                reason: "final_sample_size must be at least 1".into(),
            });
        }
        if self.pgtol.is_nan() || self.pgtol < 0.0 {
            return Err(Error::InvalidConfig {
                reason: format!("pgtol must be nonnegative, got {}", self.pgtol),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // ----- ConstraintSpec -----

    #[test]
    fn equality_budgets_validate_dimension() {
        let c = ConstraintSpec::equality(3);
        assert_eq!(c.budgets(5).unwrap(), vec![3]);
        assert!(c.budgets(2).is_err());
    }

    #[test]
    fn inclusion_sorts_dedups_and_rejects_empty() {
        let c = ConstraintSpec::inclusion([4, 0, 2, 2]).unwrap();
        assert_eq!(c.budgets(5).unwrap(), vec![0, 2, 4]);
        assert!(ConstraintSpec::inclusion([]).is_err());
        assert!(c.budgets(3).is_err()); // 4 > 3
    }

    #[test]
    fn unconstrained_expands_to_full_range() {
        let c = ConstraintSpec::unconstrained();
        assert_eq!(c.budgets(4).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    // ----- InitialP -----

    #[test]
    fn fill_materializes_and_validates() {
        assert_eq!(InitialP::Fill(0.5).materialize(3).unwrap(), vec![0.5; 3]);
        assert!(InitialP::Fill(1.5).materialize(3).is_err());
    }

    #[test]
    fn vector_checks_length_and_range() {
        let v = InitialP::Vector(vec![0.1, 0.9]);
        assert_eq!(v.materialize(2).unwrap(), vec![0.1, 0.9]);
        assert!(v.materialize(3).is_err());
        assert!(InitialP::Vector(vec![0.1, -0.2]).materialize(2).is_err());
    }

    // ----- OptimizerConfig -----

    #[test]
    fn defaults_are_the_reference_settings() {
        let c = OptimizerConfig::default();
        assert_eq!(c.learning_rate, 0.25);
        assert_eq!(c.sample_size, 100);
        assert_eq!(c.max_iterations, 500);
        assert_eq!(c.pgtol, 1e-8);
        assert_eq!(c.final_sample_size, 100);
        assert_eq!(c.direction, Direction::Maximize);
        assert!(c.use_baseline);
        assert_eq!(c.initial_p, InitialP::Fill(0.5));
        assert!(!c.decay_learning_rate);
        c.validate().unwrap();
    }

    #[test]
    fn validation_rejects_out_of_range_hyperparameters() {
        let mut c = OptimizerConfig {
            learning_rate: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(c.validate().is_err());
        c.learning_rate = 1.5;
        assert!(c.validate().is_err());
        c.learning_rate = 1.0;
        c.pgtol = 0.0;
        assert!(
            c.validate().is_ok(),
            "pgtol = 0 disables the tolerance stop"
        );
        c.pgtol = -1e-9;
        assert!(c.validate().is_err());
        c.pgtol = 1e-8;
        c.sample_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn direction_comparisons() {
        assert!(Direction::Maximize.improves(2.0, 1.0));
        assert!(!Direction::Maximize.improves(1.0, 1.0));
        assert!(Direction::Minimize.improves(0.5, 1.0));
        assert_eq!(Direction::Maximize.step_sign(), 1.0);
        assert_eq!(Direction::Minimize.step_sign(), -1.0);
    }
}
