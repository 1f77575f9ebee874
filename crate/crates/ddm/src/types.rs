//! Shared domain types: dividend histories, discount rates, growth state
//! spaces, transition matrices, and solved price-dividend ratios.

use chrono::NaiveDate;

use crate::error::{DdmError, Result};
use crate::linalg::Matrix;

/// Row sums further than this from 1 make a matrix unusable as stochastic.
pub const ROW_SUM_ERROR: f64 = 1e-9;
/// Validated stochastic matrices keep row sums within this of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Relative slack allowed when checking the second moment against the
/// squared first moment (Jensen's inequality) on solved ratios.
const JENSEN_SLACK: f64 = 1e-9;

/// A dated, strictly positive dividend history for one ticker.
///
/// Observations are kept in strictly increasing date order; construction
/// rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct DividendSeries {
    ticker: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl DividendSeries {
    pub fn new(ticker: impl Into<String>, observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if observations.is_empty() {
            return Err(DdmError::InsufficientHistory { needed: 1, got: 0 });
        }
        for (i, (date, dividend)) in observations.iter().enumerate() {
            if !dividend.is_finite() || *dividend <= 0.0 {
                return Err(DdmError::InvalidParameter(format!(
                    "dividend at {date} must be positive and finite, got {dividend}"
                )));
            }
            if i > 0 && observations[i - 1].0 >= *date {
                return Err(DdmError::InvalidParameter(format!(
                    "dates must be strictly increasing, {} is not after {}",
                    date,
                    observations[i - 1].0
                )));
            }
        }
        Ok(DividendSeries {
            ticker: ticker.into(),
            observations,
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one observation
    }

    pub fn dividends(&self) -> Vec<f64> {
        self.observations.iter().map(|(_, d)| *d).collect()
    }

    pub fn last_dividend(&self) -> f64 {
        self.observations[self.observations.len() - 1].1
    }
}

/// Annual cost of equity `k_e > 0` together with its gross form `r = 1 + k_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountRate {
    k_e: f64,
}

impl DiscountRate {
    pub fn from_annual(k_e: f64) -> Result<Self> {
        if !k_e.is_finite() || k_e <= 0.0 {
            return Err(DdmError::InvalidParameter(format!(
                "cost of equity must be positive and finite, got {k_e}"
            )));
        }
        Ok(DiscountRate { k_e })
    }

    pub fn annual(&self) -> f64 {
        self.k_e
    }

    /// Gross discount factor `r = 1 + k_e`, always above 1.
    pub fn gross(&self) -> f64 {
        1.0 + self.k_e
    }
}

/// Strictly increasing, strictly positive gross growth factors, one per state.
///
/// A factor of 1.05 means dividends grow 5% when the chain sits in that state;
/// 0.9 means a 10% cut. Zero is allowed only through the lower bound being
/// open: factors must be positive so dividends never change sign.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthStateSpace {
    factors: Vec<f64>,
}

impl GrowthStateSpace {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(DdmError::InvalidParameter(
                "state space needs at least one growth factor".into(),
            ));
        }
        for (i, g) in factors.iter().enumerate() {
            if !g.is_finite() || *g <= 0.0 {
                return Err(DdmError::InvalidParameter(format!(
                    "growth factor {i} must be positive and finite, got {g}"
                )));
            }
            if i > 0 && factors[i - 1] >= *g {
                return Err(DdmError::InvalidParameter(format!(
                    "growth factors must be strictly increasing, state {i} breaks the order"
                )));
            }
        }
        Ok(GrowthStateSpace { factors })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one factor
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn factor(&self, state: usize) -> f64 {
        self.factors[state]
    }

    /// Index of the factor closest to `factor`; ties go to the lower state.
    pub fn nearest_state(&self, factor: f64) -> usize {
        let mut best = 0;
        let mut best_gap = (self.factors[0] - factor).abs();
        for (i, g) in self.factors.iter().enumerate().skip(1) {
            let gap = (g - factor).abs();
            if gap < best_gap {
                best_gap = gap;
                best = i;
            }
        }
        best
    }
}

/// Diagnostics from checking row sums of a candidate stochastic matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticDiagnostics {
    pub max_row_deviation: f64,
}

/// Confirms every row of `p` is a probability distribution: entries in
/// `[0, 1]` and row sums within [`ROW_SUM_TOLERANCE`] of 1.
pub fn validate_stochastic(p: &Matrix) -> Result<StochasticDiagnostics> {
    let mut bad_rows = Vec::new();
    let mut max_dev: f64 = 0.0;
    for i in 0..p.rows() {
        let row = p.row(i);
        if row.iter().any(|q| !q.is_finite() || *q < 0.0 || *q > 1.0) {
            bad_rows.push(i);
            max_dev = f64::INFINITY;
            continue;
        }
        let dev = (row.iter().sum::<f64>() - 1.0).abs();
        max_dev = max_dev.max(dev);
        if dev > ROW_SUM_TOLERANCE {
            bad_rows.push(i);
        }
    }
    if bad_rows.is_empty() {
        Ok(StochasticDiagnostics {
            max_row_deviation: max_dev,
        })
    } else {
        Err(DdmError::NotStochastic {
            indices: bad_rows,
            max_deviation: max_dev,
        })
    }
}

/// Square row-stochastic transition matrix.
///
/// Construction renormalizes rows whose sums drift from 1 by less than
/// [`ROW_SUM_ERROR`] (accumulated float noise from estimation) and rejects
/// anything further off. After construction every row passes
/// [`validate_stochastic`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: Matrix,
}

impl TransitionMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut p = Matrix::from_rows(rows)?;
        if p.rows() != p.cols() {
            return Err(DdmError::DimensionMismatch(format!(
                "transition matrix must be square, got {}x{}",
                p.rows(),
                p.cols()
            )));
        }
        let mut bad_rows = Vec::new();
        let mut max_dev: f64 = 0.0;
        for i in 0..p.rows() {
            let row = p.row(i);
            if row.iter().any(|q| !q.is_finite() || *q < 0.0 || *q > 1.0 + ROW_SUM_ERROR) {
                bad_rows.push(i);
                max_dev = f64::INFINITY;
                continue;
            }
            let sum: f64 = row.iter().sum();
            let dev = (sum - 1.0).abs();
            max_dev = max_dev.max(dev);
            if dev >= ROW_SUM_ERROR {
                bad_rows.push(i);
            }
        }
        if !bad_rows.is_empty() {
            return Err(DdmError::NotStochastic {
                indices: bad_rows,
                max_deviation: max_dev,
            });
        }
        for i in 0..p.rows() {
            let sum: f64 = p.row(i).iter().sum();
            if sum != 1.0 {
                for q in p.row_mut(i) {
                    *q /= sum;
                }
            }
        }
        validate_stochastic(&p)?;
        Ok(TransitionMatrix { p })
    }

    pub fn dimension(&self) -> usize {
        self.p.rows()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.p.get(from, to)
    }

    pub fn row(&self, from: usize) -> &[f64] {
        self.p.row(from)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.p.rows()).map(|i| self.p.row(i).to_vec()).collect()
    }
}

/// A growth state space, its transition matrix, and a discount rate: the
/// full description of a Markov dividend stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGrowthModel {
    states: GrowthStateSpace,
    transition: TransitionMatrix,
    discount: DiscountRate,
}

impl MarkovGrowthModel {
    pub fn new(
        states: GrowthStateSpace,
        transition: TransitionMatrix,
        discount: DiscountRate,
    ) -> Result<Self> {
        if states.len() != transition.dimension() {
            return Err(DdmError::DimensionMismatch(format!(
                "{} growth states but a {}x{} transition matrix",
                states.len(),
                transition.dimension(),
                transition.dimension()
            )));
        }
        Ok(MarkovGrowthModel {
            states,
            transition,
            discount,
        })
    }

    pub fn states(&self) -> &GrowthStateSpace {
        &self.states
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    pub fn discount(&self) -> DiscountRate {
        self.discount
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }
}

/// Solved price-dividend ratios per state: first moment `psi1` and, when
/// computed, the second moment `psi2`.
///
/// Both are per unit of current dividend: price in state `i` is
/// `d * psi1[i]`, the second moment of price is `d^2 * psi2[i]`. The
/// constructor enforces nonnegativity and `psi2 >= psi1^2` up to float slack.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceDividendSolution {
    psi1: Vec<f64>,
    psi2: Option<Vec<f64>>,
}

impl PriceDividendSolution {
    pub fn first_order(psi1: Vec<f64>) -> Result<Self> {
        if psi1.is_empty() {
            return Err(DdmError::DimensionMismatch(
                "solution needs at least one state".into(),
            ));
        }
        for (i, v) in psi1.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(DdmError::InvalidParameter(format!(
                    "first-moment ratio for state {i} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(PriceDividendSolution { psi1, psi2: None })
    }

    pub fn with_second_order(psi1: Vec<f64>, psi2: Vec<f64>) -> Result<Self> {
        let mut solution = Self::first_order(psi1)?;
        if psi2.len() != solution.psi1.len() {
            return Err(DdmError::DimensionMismatch(format!(
                "psi2 has {} states, psi1 has {}",
                psi2.len(),
                solution.psi1.len()
            )));
        }
        for (i, (m1, m2)) in solution.psi1.iter().zip(&psi2).enumerate() {
            let floor = m1 * m1;
            if !m2.is_finite() || *m2 < floor - JENSEN_SLACK * (1.0 + floor) {
                return Err(DdmError::InvalidParameter(format!(
                    "second moment for state {i} is {m2}, below the squared first moment {floor}"
                )));
            }
        }
        solution.psi2 = Some(psi2);
        Ok(solution)
    }

    pub fn psi1(&self) -> &[f64] {
        &self.psi1
    }

    pub fn psi2(&self) -> Option<&[f64]> {
        self.psi2.as_deref()
    }

    pub fn state_count(&self) -> usize {
        self.psi1.len()
    }

    /// Per-state variance of the price-dividend ratio, `psi2 - psi1^2`,
    /// clamped at zero to absorb solver round-off.
    pub fn ratio_variance(&self) -> Option<Vec<f64>> {
        self.psi2.as_ref().map(|psi2| {
            self.psi1
                .iter()
                .zip(psi2)
                .map(|(m1, m2)| (m2 - m1 * m1).max(0.0))
                .collect()
        })
    }
}
