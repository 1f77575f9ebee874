use std::fmt;

use thiserror::Error;

/// Transversality condition labels for [`DdmError::TransversalityViolated`].
///
/// `A1` bounds expected growth against the discount factor and is required
/// for a finite price. `A2` does the same for squared growth and is required
/// for a finite second moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    A1,
    A2,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::A1 => write!(f, "A1"),
            Condition::A2 => write!(f, "A2"),
        }
    }
}

/// Errors shared across the valuation, estimation, and simulation modules.
///
/// Display output always starts with the variant name so callers (and the
/// command line frontend) can match on it textually.
#[derive(Debug, Clone, Error)]
pub enum DdmError {
    /// Gaussian elimination hit a pivot too small to trust.
    #[error("SingularMatrix: pivot {pivot:.3e} below tolerance at elimination step {step}")]
    SingularMatrix { step: usize, pivot: f64 },

    /// A probability distribution was required but sums are off by too much.
    /// `indices` names the offending rows (or columns, for mixture weights).
    #[error("NotStochastic: distribution(s) {indices:?} deviate from unit sum by up to {max_deviation:.3e}")]
    NotStochastic {
        indices: Vec<usize>,
        max_deviation: f64,
    },

    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    /// A closed form or iteration has no finite limit for these inputs.
    #[error("NonConvergent: {0}")]
    NonConvergent(String),

    #[error("InsufficientHistory: need at least {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    /// Expected growth outruns discounting, so the price series diverges.
    #[error("TransversalityViolated: condition {condition} fails, worst-state mean {g_bar:.6} is not below the bound {bound:.6}")]
    TransversalityViolated {
        condition: Condition,
        g_bar: f64,
        bound: f64,
    },

    #[error("StateOutOfRange: index {index} not below state count {states}")]
    StateOutOfRange { index: usize, states: usize },

    /// Joint state spaces grow as m^gamma; refuse to build absurd systems.
    #[error("SystemTooLarge: joint state space has {size} states, cap is {cap}")]
    SystemTooLarge { size: usize, cap: usize },

    #[error("DegenerateBins: {0}")]
    DegenerateBins(String),

    #[error("ZeroVarianceMarket: market excess returns have no variance, beta is undefined")]
    ZeroVarianceMarket,

    /// The truncation horizon leaves a tail larger than the requested tolerance.
    #[error("HorizonTooShort: tail bound {bound:.3e} exceeds tolerance {tolerance:.3e}")]
    HorizonTooShort { bound: f64, tolerance: f64 },

    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DdmError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_starts_with_variant_name() {
        let cases: Vec<(DdmError, &str)> = vec![
            (
                DdmError::SingularMatrix {
                    step: 1,
                    pivot: 1e-20,
                },
                "SingularMatrix",
            ),
            (
                DdmError::NotStochastic {
                    indices: vec![0],
                    max_deviation: 0.5,
                },
                "NotStochastic",
            ),
            (
                DdmError::DimensionMismatch("x".into()),
                "DimensionMismatch",
            ),
            (DdmError::NonConvergent("g >= k_e".into()), "NonConvergent"),
            (
                DdmError::InsufficientHistory { needed: 2, got: 1 },
                "InsufficientHistory",
            ),
            (
                DdmError::TransversalityViolated {
                    condition: Condition::A1,
                    g_bar: 1.2,
                    bound: 1.1,
                },
                "TransversalityViolated",
            ),
            (
                DdmError::StateOutOfRange {
                    index: 3,
                    states: 2,
                },
                "StateOutOfRange",
            ),
            (
                DdmError::SystemTooLarge {
                    size: 10_000,
                    cap: 4096,
                },
                "SystemTooLarge",
            ),
            (DdmError::DegenerateBins("only 1 value".into()), "DegenerateBins"),
            (DdmError::ZeroVarianceMarket, "ZeroVarianceMarket"),
            (
                DdmError::HorizonTooShort {
                    bound: 1e-3,
                    tolerance: 1e-8,
                },
                "HorizonTooShort",
            ),
            (
                DdmError::InvalidParameter("d0 must be positive".into()),
                "InvalidParameter",
            ),
        ];
        for (err, name) in cases {
            let text = err.to_string();
            assert!(
                text.starts_with(name),
                "expected {text:?} to start with {name:?}"
            );
        }
    }

    #[test]
    fn transversality_message_names_the_condition() {
        let err = DdmError::TransversalityViolated {
            condition: Condition::A2,
            g_bar: 1.21,
            bound: 1.19,
        };
        assert!(err.to_string().contains("A2"));
    }
}
