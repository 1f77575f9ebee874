//! Dividend discount valuation.
//!
//! A share is worth its expected discounted dividend stream. This crate
//! prices that stream under progressively richer dividend dynamics:
//!
//! - [`deterministic`]: constant growth and its multi-phase refinements.
//! - [`binomial`]: discrete up/hold/bankrupt dividend moves in closed form.
//! - [`markov`]: growth rates following a finite-state chain, giving price
//!   *distributions* — first and second moments of the price-dividend ratio.
//! - [`multivariate`]: several coupled stocks whose states feed each other,
//!   with price covariances between them.
//! - [`estimation`]: fitting states, transition matrices, mixture weights,
//!   and the discount rate from historical data.
//! - [`sim`]: Monte Carlo and direct series summation used as independent
//!   checks on every closed form above.
//!
//! The [`cli`] module wires these into the `ddm` binary; each major
//! capability also has a runnable example under `examples/`.

pub mod binomial;
pub mod cli;
pub mod deterministic;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod markov;
pub mod multivariate;
pub mod sim;
pub mod types;

pub use error::{Condition, DdmError, Result};
pub use types::{
    DiscountRate, DividendSeries, GrowthStateSpace, MarkovGrowthModel, PriceDividendSolution,
    TransitionMatrix,
};
