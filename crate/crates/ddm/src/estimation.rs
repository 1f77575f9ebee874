//! Fitting model inputs from historical data: growth discretization,
//! transition counts, mixture weights, and the cost of equity.

use serde::Serialize;

use crate::error::{DdmError, Result};
use crate::types::{DividendSeries, GrowthStateSpace, TransitionMatrix};

const LAMBDA_SWEEP_CAP: usize = 100_000;
const LAMBDA_IMPROVEMENT: f64 = 1e-10;

/// Period-over-period growth rates `(D(t+1) - D(t)) / D(t)`.
pub fn growth_series(series: &DividendSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(DdmError::InsufficientHistory {
            needed: 2,
            got: series.len(),
        });
    }
    let d = series.dividends();
    Ok(d.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// Quantile-binned growth states and the bin index of every observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    /// Growth factors, `1 +` the mean rate of each bin.
    pub states: GrowthStateSpace,
    /// Bin of each input observation, in input order.
    pub indices: Vec<usize>,
}

/// Splits growth rates into `m` quantile bins and represents each bin by one
/// plus its mean rate.
///
/// Thresholds sit at the sorted ranks `ceil(k n / m) - 1`; an observation's
/// bin is the number of thresholds strictly below it, so values tied with a
/// threshold fall in the lower bin. Too few distinct values, or a bin left
/// empty by heavy ties, is reported rather than papered over.
pub fn discretize_states(growth_rates: &[f64], m: usize) -> Result<Discretization> {
    if m == 0 {
        return Err(DdmError::InvalidParameter(
            "state count must be at least 1".into(),
        ));
    }
    let n = growth_rates.len();
    if n < m {
        return Err(DdmError::InsufficientHistory { needed: m, got: n });
    }
    if growth_rates.iter().any(|g| !g.is_finite()) {
        return Err(DdmError::InvalidParameter(
            "growth rates must be finite".into(),
        ));
    }
    let mut sorted = growth_rates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < m {
        return Err(DdmError::DegenerateBins(format!(
            "{distinct} distinct growth rates cannot fill {m} states"
        )));
    }
    let thresholds: Vec<f64> = (1..m).map(|k| sorted[(k * n).div_ceil(m) - 1]).collect();

    let indices: Vec<usize> = growth_rates
        .iter()
        .map(|g| thresholds.iter().filter(|t| *t < g).count())
        .collect();

    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (g, bin) in growth_rates.iter().zip(&indices) {
        sums[*bin] += g;
        counts[*bin] += 1;
    }
    if let Some(empty) = counts.iter().position(|c| *c == 0) {
        return Err(DdmError::DegenerateBins(format!(
            "ties around the thresholds left state {empty} empty"
        )));
    }
    let factors: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(sum, count)| 1.0 + sum / *count as f64)
        .collect();
    Ok(Discretization {
        states: GrowthStateSpace::new(factors)?,
        indices,
    })
}

/// Maximum-likelihood transition matrix from a state-index path, with
/// optional additive smoothing: `p_ij = (c_ij + s) / (c_i + m s)`.
///
/// Without smoothing, states never left from get a uniform row.
pub fn estimate_transition_matrix(
    indices: &[usize],
    m: usize,
    smoothing: f64,
) -> Result<TransitionMatrix> {
    if indices.len() < 2 {
        return Err(DdmError::InsufficientHistory {
            needed: 2,
            got: indices.len(),
        });
    }
    transition_from_pairs(indices.windows(2).map(|w| (w[0], w[1])), m, smoothing)
}

/// Transition matrix between two aligned state paths: counts moves from
/// `from[k]` to `to[k+1]`. With `from == to` this is the ordinary estimate.
pub fn estimate_cross_transition_matrix(
    from: &[usize],
    to: &[usize],
    m: usize,
    smoothing: f64,
) -> Result<TransitionMatrix> {
    if from.len() != to.len() {
        return Err(DdmError::DimensionMismatch(format!(
            "state paths have lengths {} and {}",
            from.len(),
            to.len()
        )));
    }
    if from.len() < 2 {
        return Err(DdmError::InsufficientHistory {
            needed: 2,
            got: from.len(),
        });
    }
    transition_from_pairs(
        from.iter()
            .zip(to.iter().skip(1))
            .map(|(f, t)| (*f, *t)),
        m,
        smoothing,
    )
}

fn transition_from_pairs(
    pairs: impl Iterator<Item = (usize, usize)>,
    m: usize,
    smoothing: f64,
) -> Result<TransitionMatrix> {
    if m == 0 {
        return Err(DdmError::InvalidParameter(
            "state count must be at least 1".into(),
        ));
    }
    if !smoothing.is_finite() || smoothing < 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "smoothing must be nonnegative and finite, got {smoothing}"
        )));
    }
    let mut counts = vec![vec![0usize; m]; m];
    for (from, to) in pairs {
        if from >= m || to >= m {
            return Err(DdmError::StateOutOfRange {
                index: from.max(to),
                states: m,
            });
        }
        counts[from][to] += 1;
    }
    let rows: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| {
            let visits: usize = row.iter().sum();
            if visits == 0 && smoothing == 0.0 {
                return vec![1.0 / m as f64; m];
            }
            let denominator = visits as f64 + m as f64 * smoothing;
            row.iter()
                .map(|c| (*c as f64 + smoothing) / denominator)
                .collect()
        })
        .collect();
    TransitionMatrix::from_rows(&rows)
}

/// Least-squares mixture weights for every stock.
///
/// For stock `alpha` the weights minimize, over the probability simplex, the
/// squared distance between the mixed one-step prediction
/// `sum_beta lambda_beta P(beta,alpha)[s_beta(k)]` and the indicator of the
/// realized next state, summed over the sample. The quadratic is solved by
/// coordinate descent on weight pairs, which preserves the simplex exactly.
/// Returns `lambda[beta][alpha]`, columns summing to one.
pub fn estimate_lambda(
    indices: &[Vec<usize>],
    cross: &[Vec<TransitionMatrix>],
) -> Result<Vec<Vec<f64>>> {
    let gamma = indices.len();
    if gamma == 0 {
        return Err(DdmError::DimensionMismatch(
            "need at least one state path".into(),
        ));
    }
    if cross.len() != gamma || cross.iter().any(|row| row.len() != gamma) {
        return Err(DdmError::DimensionMismatch(
            "cross kernels must form a gamma x gamma array".into(),
        ));
    }
    let steps = indices[0].len();
    if indices.iter().any(|path| path.len() != steps) {
        return Err(DdmError::DimensionMismatch(
            "state paths must have equal length".into(),
        ));
    }
    if steps < 2 {
        return Err(DdmError::InsufficientHistory {
            needed: 2,
            got: steps,
        });
    }
    let m = cross[0][0].dimension();
    for row in cross {
        for kernel in row {
            if kernel.dimension() != m {
                return Err(DdmError::DimensionMismatch(
                    "cross kernels must share one state count".into(),
                ));
            }
        }
    }
    for path in indices {
        if let Some(bad) = path.iter().find(|i| **i >= m) {
            return Err(DdmError::StateOutOfRange {
                index: *bad,
                states: m,
            });
        }
    }

    let mut lambda = vec![vec![0.0; gamma]; gamma];
    for alpha in 0..gamma {
        // Quadratic data: H[b][c] = sum_k <x_b, x_c>, b[b] = sum_k x_b[next].
        let mut h = vec![vec![0.0; gamma]; gamma];
        let mut b = vec![0.0; gamma];
        for k in 0..steps - 1 {
            let rows: Vec<&[f64]> = (0..gamma)
                .map(|beta| cross[beta][alpha].row(indices[beta][k]))
                .collect();
            let next = indices[alpha][k + 1];
            for (bi, row_i) in rows.iter().enumerate() {
                b[bi] += row_i[next];
                for (bj, row_j) in rows.iter().enumerate().skip(bi) {
                    let dot: f64 = row_i.iter().zip(*row_j).map(|(a, c)| a * c).sum();
                    h[bi][bj] += dot;
                    if bj > bi {
                        h[bj][bi] += dot;
                    }
                }
            }
        }
        let column = simplex_quadratic_argmin(&h, &b)?;
        for beta in 0..gamma {
            lambda[beta][alpha] = column[beta];
        }
    }
    Ok(lambda)
}

/// Minimizes `w' H w - 2 b' w` over the probability simplex by descending
/// along pair directions `e_v - e_u`; each move solves the 1-d quadratic
/// exactly and clips to the nonnegativity bounds.
fn simplex_quadratic_argmin(h: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let gamma = b.len();
    if gamma == 1 {
        return Ok(vec![1.0]);
    }
    let objective = |w: &[f64]| {
        let mut value = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let hw: f64 = h[i].iter().zip(w).map(|(hij, wj)| hij * wj).sum();
            value += wi * hw - 2.0 * b[i] * wi;
        }
        value
    };
    let mut weights = vec![1.0 / gamma as f64; gamma];
    let mut current = objective(&weights);
    for _ in 0..LAMBDA_SWEEP_CAP {
        let before = current;
        for u in 0..gamma {
            for v in u + 1..gamma {
                let hw_u: f64 = h[u].iter().zip(&weights).map(|(hij, wj)| hij * wj).sum();
                let hw_v: f64 = h[v].iter().zip(&weights).map(|(hij, wj)| hij * wj).sum();
                let slope = 2.0 * ((hw_v - b[v]) - (hw_u - b[u]));
                let curvature = 2.0 * (h[u][u] - 2.0 * h[u][v] + h[v][v]);
                let step = if curvature > f64::MIN_POSITIVE {
                    -slope / curvature
                } else if slope > 0.0 {
                    -weights[v]
                } else if slope < 0.0 {
                    weights[u]
                } else {
                    0.0
                };
                let step = step.clamp(-weights[v], weights[u]);
                if step != 0.0 {
                    weights[u] -= step;
                    weights[v] += step;
                    let after = objective(&weights);
                    // Exact 1-d minimization can never go uphill.
                    debug_assert!(
                        after <= current + 1e-9 * (1.0 + current.abs()),
                        "objective rose from {current} to {after}"
                    );
                    current = after;
                }
            }
        }
        if before - current < LAMBDA_IMPROVEMENT {
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w = (*w / total).max(0.0);
            }
            return Ok(weights);
        }
    }
    Err(DdmError::NonConvergent(format!(
        "mixture weight descent still improving after {LAMBDA_SWEEP_CAP} sweeps"
    )))
}

/// Return histories for the regression estimate of the cost of equity.
#[derive(Debug, Clone, PartialEq)]
pub struct CapmInputs {
    pub stock_returns: Vec<f64>,
    pub market_returns: Vec<f64>,
    pub risk_free: RiskFree,
}

/// Risk-free rate: one value for the whole sample or one per period.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskFree {
    Constant(f64),
    Series(Vec<f64>),
}

/// Regression output: the exposure, the excess-return intercept, and the
/// implied cost of equity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapmEstimate {
    pub beta: f64,
    pub alpha: f64,
    pub k_e: f64,
}

/// Minimum observations for the cost-of-equity regression.
const CAPM_MIN_LENGTH: usize = 8;

/// Beta from excess-return covariance and the cost of equity
/// `mean(r_f) + beta * (mean(r_m) - mean(r_f))`.
pub fn capm_cost_of_equity(inputs: &CapmInputs) -> Result<CapmEstimate> {
    let n = inputs.stock_returns.len();
    if inputs.market_returns.len() != n {
        return Err(DdmError::DimensionMismatch(format!(
            "{n} stock returns against {} market returns",
            inputs.market_returns.len()
        )));
    }
    if n < CAPM_MIN_LENGTH {
        return Err(DdmError::InsufficientHistory {
            needed: CAPM_MIN_LENGTH,
            got: n,
        });
    }
    let risk_free: Vec<f64> = match &inputs.risk_free {
        RiskFree::Constant(rate) => vec![*rate; n],
        RiskFree::Series(series) => {
            if series.len() != n {
                return Err(DdmError::DimensionMismatch(format!(
                    "{n} returns against {} risk-free rates",
                    series.len()
                )));
            }
            series.clone()
        }
    };
    for value in inputs
        .stock_returns
        .iter()
        .chain(&inputs.market_returns)
        .chain(&risk_free)
    {
        if !value.is_finite() {
            return Err(DdmError::InvalidParameter(
                "returns must be finite".into(),
            ));
        }
    }

    let excess_stock: Vec<f64> = inputs
        .stock_returns
        .iter()
        .zip(&risk_free)
        .map(|(r, rf)| r - rf)
        .collect();
    let excess_market: Vec<f64> = inputs
        .market_returns
        .iter()
        .zip(&risk_free)
        .map(|(r, rf)| r - rf)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_stock = mean(&excess_stock);
    let mean_market = mean(&excess_market);
    let mut covariance = 0.0;
    let mut market_variance = 0.0;
    for (zs, zm) in excess_stock.iter().zip(&excess_market) {
        covariance += (zs - mean_stock) * (zm - mean_market);
        market_variance += (zm - mean_market) * (zm - mean_market);
    }
    // A constant market leaves only rounding noise in the deviations, at
    // most an ulp of the magnitude per term.
    let scale = excess_market.iter().fold(0.0_f64, |acc, z| acc.max(z.abs()));
    if market_variance <= n as f64 * (4.0 * f64::EPSILON * scale).powi(2) {
        return Err(DdmError::ZeroVarianceMarket);
    }
    let beta = covariance / market_variance;
    let mean_rf = mean(&risk_free);
    let mean_rm = mean(&inputs.market_returns);
    Ok(CapmEstimate {
        beta,
        alpha: mean_stock - beta * mean_market,
        k_e: mean_rf + beta * (mean_rm - mean_rf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PathRng;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;

    fn series(dividends: &[f64]) -> DividendSeries {
        let observations = dividends
            .iter()
            .enumerate()
            .map(|(i, d)| {
                (
                    NaiveDate::from_ymd_opt(2000 + i as i32, 6, 30).unwrap(),
                    *d,
                )
            })
            .collect();
        DividendSeries::new("TEST", observations).unwrap()
    }

    #[test]
    fn growth_rates_are_simple_returns() {
        let g = growth_series(&series(&[1.0, 1.1, 1.21])).unwrap();
        assert_relative_eq!(g[0], 0.1, max_relative = 1e-12);
        assert_relative_eq!(g[1], 0.1, max_relative = 1e-12);
        assert!(matches!(
            growth_series(&series(&[1.0])).unwrap_err(),
            DdmError::InsufficientHistory { needed: 2, got: 1 }
        ));
    }

    #[test]
    fn median_split_into_two_bins() {
        let rates = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06];
        let d = discretize_states(&rates, 2).unwrap();
        assert_eq!(d.indices, vec![0, 0, 0, 1, 1, 1]);
        assert_relative_eq!(d.states.factor(0), 1.02, max_relative = 1e-12);
        assert_relative_eq!(d.states.factor(1), 1.05, max_relative = 1e-12);
    }

    #[test]
    fn threshold_ties_go_to_the_lower_bin() {
        let rates = [0.05, 0.01, 0.03, 0.03, 0.09];
        // n = 5, m = 2: threshold at sorted rank ceil(5/2) - 1 = 2 -> 0.03.
        let d = discretize_states(&rates, 2).unwrap();
        assert_eq!(d.indices, vec![1, 0, 0, 0, 1]);
    }

    #[test]
    fn degenerate_distributions_are_rejected() {
        assert!(matches!(
            discretize_states(&[0.02; 8], 2).unwrap_err(),
            DdmError::DegenerateBins(_)
        ));
        // Two distinct values but the upper one swallows the threshold,
        // leaving the top bin empty.
        assert!(matches!(
            discretize_states(&[0.01, 0.02, 0.02, 0.02], 2).unwrap_err(),
            DdmError::DegenerateBins(_)
        ));
        assert!(matches!(
            discretize_states(&[0.01], 2).unwrap_err(),
            DdmError::InsufficientHistory { .. }
        ));
    }

    #[test]
    fn transition_counts_without_smoothing() {
        let p = estimate_transition_matrix(&[0, 1, 0, 1, 1], 2, 0.0).unwrap();
        assert_relative_eq!(p.prob(0, 1), 1.0, max_relative = 1e-12);
        assert_relative_eq!(p.prob(1, 0), 0.5, max_relative = 1e-12);
        assert_relative_eq!(p.prob(1, 1), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn smoothing_pulls_rows_toward_uniform() {
        let p = estimate_transition_matrix(&[0, 1, 0, 1, 1], 2, 1.0).unwrap();
        // Row 0: counts (0, 2) -> (1, 3) / 4.
        assert_relative_eq!(p.prob(0, 0), 0.25, max_relative = 1e-12);
        assert_relative_eq!(p.prob(0, 1), 0.75, max_relative = 1e-12);
    }

    #[test]
    fn unvisited_states_get_uniform_rows() {
        let p = estimate_transition_matrix(&[0, 0, 0], 3, 0.0).unwrap();
        for j in 0..3 {
            assert_relative_eq!(p.prob(1, j), 1.0 / 3.0, max_relative = 1e-12);
            assert_relative_eq!(p.prob(2, j), 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn cross_counts_use_shifted_pairs() {
        let from = [0, 0, 1, 1];
        let to = [1, 1, 0, 0];
        // Pairs: (0, to[1]=1), (0, to[2]=0), (1, to[3]=0).
        let p = estimate_cross_transition_matrix(&from, &to, 2, 0.0).unwrap();
        assert_relative_eq!(p.prob(0, 0), 0.5, max_relative = 1e-12);
        assert_relative_eq!(p.prob(0, 1), 0.5, max_relative = 1e-12);
        assert_relative_eq!(p.prob(1, 0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn transition_estimate_recovers_the_generator() {
        let truth = [[0.8, 0.2], [0.35, 0.65]];
        let mut rng = PathRng::new(2024, 0);
        let mut path = vec![0usize];
        for _ in 0..40_000 {
            let state = *path.last().unwrap();
            let next = if rng.next_f64() < truth[state][0] { 0 } else { 1 };
            path.push(next);
        }
        let p = estimate_transition_matrix(&path, 2, 0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (p.prob(i, j) - truth[i][j]).abs() < 0.015,
                    "p[{i}][{j}] = {}",
                    p.prob(i, j)
                );
            }
        }
    }

    #[test]
    fn single_stock_lambda_is_one() {
        let kernel = TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let lambda = estimate_lambda(&[vec![0, 1, 0, 1]], &[vec![kernel]]).unwrap();
        assert_eq!(lambda, vec![vec![1.0]]);
    }

    #[test]
    fn lambda_recovers_a_copycat_stock() {
        // Stock 1's next state equals stock 0's current state; its own
        // history is pure noise. The informative kernel is (near)
        // deterministic, the self kernel uniform, so all weight for stock 1
        // belongs on stock 0.
        let copy = TransitionMatrix::from_rows(&[vec![0.95, 0.05], vec![0.05, 0.95]]).unwrap();
        let noise = TransitionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let mut rng = PathRng::new(7, 1);
        let steps = 30_000;
        let mut path0 = vec![0usize];
        for _ in 0..steps {
            path0.push(usize::from(rng.next_f64() < 0.5));
        }
        let mut path1 = vec![0usize];
        for k in 0..steps {
            // Follow stock 0 with the same 0.95 fidelity the kernel claims.
            let target = path0[k];
            let flip = rng.next_f64() < 0.05;
            path1.push(if flip { 1 - target } else { target });
        }
        let cross = vec![
            vec![noise.clone(), copy.clone()],
            vec![noise.clone(), noise.clone()],
        ];
        let lambda = estimate_lambda(&[path0, path1], &cross).unwrap();
        // Column 1 drives stock 1.
        assert!(
            lambda[0][1] > 0.9,
            "expected weight on the driver, got {}",
            lambda[0][1]
        );
        let column_sum: f64 = lambda[0][1] + lambda[1][1];
        assert_relative_eq!(column_sum, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn capm_recovers_exact_linear_exposure() {
        let mut rng = PathRng::new(99, 0);
        let rf = 0.002;
        let beta = 1.3;
        let market: Vec<f64> = (0..48).map(|_| 0.006 + 0.03 * rng.next_gaussian()).collect();
        let stock: Vec<f64> = market.iter().map(|rm| rf + beta * (rm - rf)).collect();
        let estimate = capm_cost_of_equity(&CapmInputs {
            stock_returns: stock,
            market_returns: market.clone(),
            risk_free: RiskFree::Constant(rf),
        })
        .unwrap();
        assert_relative_eq!(estimate.beta, beta, max_relative = 1e-10);
        assert!(estimate.alpha.abs() < 1e-12);
        let mean_rm = market.iter().sum::<f64>() / market.len() as f64;
        assert_relative_eq!(
            estimate.k_e,
            rf + beta * (mean_rm - rf),
            max_relative = 1e-10
        );
    }

    #[test]
    fn capm_rejects_flat_markets_and_short_samples() {
        let flat = CapmInputs {
            stock_returns: vec![0.01; 10],
            market_returns: vec![0.02; 10],
            risk_free: RiskFree::Constant(0.0),
        };
        assert!(matches!(
            capm_cost_of_equity(&flat).unwrap_err(),
            DdmError::ZeroVarianceMarket
        ));
        let short = CapmInputs {
            stock_returns: vec![0.01; 5],
            market_returns: vec![0.02; 5],
            risk_free: RiskFree::Constant(0.0),
        };
        assert!(matches!(
            capm_cost_of_equity(&short).unwrap_err(),
            DdmError::InsufficientHistory { needed: 8, got: 5 }
        ));
        let mismatched = CapmInputs {
            stock_returns: vec![0.01; 10],
            market_returns: vec![0.02; 9],
            risk_free: RiskFree::Constant(0.0),
        };
        assert!(matches!(
            capm_cost_of_equity(&mismatched).unwrap_err(),
            DdmError::DimensionMismatch(_)
        ));
    }

    #[test]
    fn per_period_risk_free_changes_the_intercept() {
        let mut rng = PathRng::new(17, 4);
        let market: Vec<f64> = (0..24).map(|_| 0.005 + 0.02 * rng.next_gaussian()).collect();
        let stock: Vec<f64> = market.iter().map(|rm| 0.001 + 0.8 * rm).collect();
        let rates: Vec<f64> = (0..24).map(|i| 0.001 + 0.0001 * i as f64).collect();
        let estimate = capm_cost_of_equity(&CapmInputs {
            stock_returns: stock,
            market_returns: market,
            risk_free: RiskFree::Series(rates),
        })
        .unwrap();
        assert!(estimate.beta > 0.7 && estimate.beta < 0.9);
        assert!(estimate.k_e.is_finite());
    }
}
