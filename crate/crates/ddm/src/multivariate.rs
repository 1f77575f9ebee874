//! Multivariate Markov dividend model of mixture-transition-distribution
//! (MTD) type.
//!
//! Each of `gamma` stocks carries its own growth state space of common size
//! `m`. The next-state distribution of stock `alpha` is a `lambda`-weighted
//! mixture of transitions conditioned on every stock's current state, so the
//! joint chain lives on `m^gamma` states. First and second moments of each
//! price, and cross-moments between prices, solve linear systems over that
//! joint space; destination states are conditionally independent given the
//! current joint state.

use std::collections::BTreeMap;

use crate::error::{Condition, DdmError, Result};
use crate::linalg::{self, Matrix};
use crate::markov::TransversalityReport;
use crate::types::{DiscountRate, GrowthStateSpace, TransitionMatrix, ROW_SUM_ERROR};

/// Joint systems are dense; refuse state spaces past this size.
pub const JOINT_STATE_CAP: usize = 4096;

/// The MTD model: per-stock states and discounts, mixture weights, and the
/// cross transition matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MtdModel {
    states: Vec<GrowthStateSpace>,
    /// `lambda[beta][alpha]`: weight of stock beta's state when predicting
    /// stock alpha. Columns (fixed alpha) sum to 1.
    lambda: Vec<Vec<f64>>,
    /// `cross[beta][alpha]`: transition matrix from stock beta's current
    /// state to stock alpha's next state.
    cross: Vec<Vec<TransitionMatrix>>,
    discounts: Vec<DiscountRate>,
}

impl MtdModel {
    /// Validates shapes (common state count `m`, square gamma-by-gamma
    /// weights and kernels) and the column-stochastic constraint on
    /// `lambda`. Columns drifting from unit sum by less than the usual
    /// stochastic-matrix tolerance are renormalized.
    pub fn new(
        states: Vec<GrowthStateSpace>,
        lambda: Vec<Vec<f64>>,
        cross: Vec<Vec<TransitionMatrix>>,
        discounts: Vec<DiscountRate>,
    ) -> Result<Self> {
        let gamma = states.len();
        if gamma == 0 {
            return Err(DdmError::DimensionMismatch(
                "model needs at least one stock".into(),
            ));
        }
        let m = states[0].len();
        if states.iter().any(|s| s.len() != m) {
            return Err(DdmError::DimensionMismatch(
                "every stock must use the same state count".into(),
            ));
        }
        if discounts.len() != gamma {
            return Err(DdmError::DimensionMismatch(format!(
                "{} discount rates for {gamma} stocks",
                discounts.len()
            )));
        }
        if lambda.len() != gamma || lambda.iter().any(|row| row.len() != gamma) {
            return Err(DdmError::DimensionMismatch(
                "lambda must be gamma x gamma".into(),
            ));
        }
        if cross.len() != gamma || cross.iter().any(|row| row.len() != gamma) {
            return Err(DdmError::DimensionMismatch(
                "cross kernels must form a gamma x gamma array".into(),
            ));
        }
        for row in &cross {
            for kernel in row {
                if kernel.dimension() != m {
                    return Err(DdmError::DimensionMismatch(format!(
                        "cross kernel is {}x{}, states have size {m}",
                        kernel.dimension(),
                        kernel.dimension()
                    )));
                }
            }
        }

        let mut lambda = lambda;
        let mut bad_columns = Vec::new();
        let mut max_dev: f64 = 0.0;
        for alpha in 0..gamma {
            let mut sum = 0.0;
            let mut valid = true;
            for row in &lambda {
                let w = row[alpha];
                if !w.is_finite() || w < 0.0 || w > 1.0 + ROW_SUM_ERROR {
                    valid = false;
                }
                sum += w;
            }
            let dev = (sum - 1.0).abs();
            if !valid {
                bad_columns.push(alpha);
                max_dev = f64::INFINITY;
            } else if dev >= ROW_SUM_ERROR {
                bad_columns.push(alpha);
                max_dev = max_dev.max(dev);
            } else {
                max_dev = max_dev.max(dev);
                if sum != 1.0 {
                    for row in lambda.iter_mut() {
                        row[alpha] /= sum;
                    }
                }
            }
        }
        if !bad_columns.is_empty() {
            return Err(DdmError::NotStochastic {
                indices: bad_columns,
                max_deviation: max_dev,
            });
        }

        Ok(MtdModel {
            states,
            lambda,
            cross,
            discounts,
        })
    }

    pub fn stock_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_count(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self, stock: usize) -> &GrowthStateSpace {
        &self.states[stock]
    }

    pub fn discount(&self, stock: usize) -> DiscountRate {
        self.discounts[stock]
    }

    pub fn lambda(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    pub fn cross_kernel(&self, beta: usize, alpha: usize) -> &TransitionMatrix {
        &self.cross[beta][alpha]
    }

    /// Size of the joint state space, `m^gamma`, capped at
    /// [`JOINT_STATE_CAP`].
    pub fn joint_dimension(&self) -> Result<usize> {
        let mut size: u128 = 1;
        for _ in 0..self.stock_count() {
            size = size.saturating_mul(self.state_count() as u128);
        }
        if size > JOINT_STATE_CAP as u128 {
            return Err(DdmError::SystemTooLarge {
                size: size.min(usize::MAX as u128) as usize,
                cap: JOINT_STATE_CAP,
            });
        }
        Ok(size as usize)
    }

    /// Lexicographic rank of a joint state; the first stock's index is the
    /// most significant digit. This is the enumeration order used by every
    /// joint vector in this module.
    pub fn joint_rank(&self, state: &JointState) -> Result<usize> {
        if state.indices().len() != self.stock_count() {
            return Err(DdmError::DimensionMismatch(format!(
                "joint state has {} components, model has {} stocks",
                state.indices().len(),
                self.stock_count()
            )));
        }
        let m = self.state_count();
        let mut rank = 0;
        for &index in state.indices() {
            if index >= m {
                return Err(DdmError::StateOutOfRange { index, states: m });
            }
            rank = rank * m + index;
        }
        Ok(rank)
    }

    /// Inverse of [`joint_rank`](Self::joint_rank).
    pub fn joint_state_of(&self, rank: usize) -> JointState {
        let m = self.state_count();
        let gamma = self.stock_count();
        let mut indices = vec![0; gamma];
        let mut rest = rank;
        for f in (0..gamma).rev() {
            indices[f] = rest % m;
            rest /= m;
        }
        JointState::new(indices)
    }

    /// All joint states in rank order.
    pub fn enumerate_joint_states(&self) -> Result<Vec<JointState>> {
        Ok((0..self.joint_dimension()?)
            .map(|rank| self.joint_state_of(rank))
            .collect())
    }

    /// Mixture distribution over stock `alpha`'s next state given the joint
    /// current state: `sum_beta lambda[beta][alpha] * P(beta,alpha)[a_beta]`.
    pub fn mixture_row(&self, alpha: usize, joint: &[usize]) -> Vec<f64> {
        let m = self.state_count();
        let mut row = vec![0.0; m];
        for (beta, weights) in self.lambda.iter().enumerate() {
            let w = weights[alpha];
            let kernel_row = self.cross[beta][alpha].row(joint[beta]);
            for (out, p) in row.iter_mut().zip(kernel_row) {
                *out += w * p;
            }
        }
        row
    }
}

/// One state index per stock, each in `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct JointState {
    indices: Vec<usize>,
}

impl JointState {
    pub fn new(indices: Vec<usize>) -> Self {
        JointState { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// A per-stock probability row over the m states.
#[derive(Debug, Clone, PartialEq)]
pub struct StockDistribution {
    probabilities: Vec<f64>,
}

impl StockDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(DdmError::DimensionMismatch(
                "distribution needs at least one state".into(),
            ));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DdmError::NotStochastic {
                indices: vec![0],
                max_deviation: f64::INFINITY,
            });
        }
        let dev = (probabilities.iter().sum::<f64>() - 1.0).abs();
        if dev > 1e-12 {
            return Err(DdmError::NotStochastic {
                indices: vec![0],
                max_deviation: dev,
            });
        }
        Ok(StockDistribution { probabilities })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// One step of the distribution dynamics:
/// `A_alpha(k+1) = sum_beta lambda[beta][alpha] * A_beta(k) P(beta,alpha)`.
pub fn mtd_step(model: &MtdModel, dists: &[StockDistribution]) -> Result<Vec<StockDistribution>> {
    let gamma = model.stock_count();
    let m = model.state_count();
    if dists.len() != gamma {
        return Err(DdmError::DimensionMismatch(format!(
            "{} distributions for {gamma} stocks",
            dists.len()
        )));
    }
    for d in dists {
        if d.probabilities().len() != m {
            return Err(DdmError::DimensionMismatch(format!(
                "distribution over {} states, model has {m}",
                d.probabilities().len()
            )));
        }
    }
    let mut out = Vec::with_capacity(gamma);
    for alpha in 0..gamma {
        let mut next = vec![0.0; m];
        for (beta, dist) in dists.iter().enumerate() {
            let w = model.lambda[beta][alpha];
            let kernel = model.cross[beta][alpha].matrix();
            for (h, mass) in dist.probabilities().iter().enumerate() {
                let scaled = w * mass;
                if scaled == 0.0 {
                    continue;
                }
                for j in 0..m {
                    next[j] += scaled * kernel.get(h, j);
                }
            }
        }
        out.push(StockDistribution::new(next)?);
    }
    Ok(out)
}

/// Per-stock transversality reports.
///
/// The worst-case one-step mean for stock `alpha` separates across stocks:
/// each `beta` contributes `lambda[beta][alpha]` times the worst row of
/// `P(beta,alpha) g`, so the maximum over all `m^gamma` joint configurations
/// reduces to a sum of per-kernel maxima. Never fails; divergent stocks
/// report failing flags.
pub fn check_multi_conditions(model: &MtdModel) -> Vec<TransversalityReport> {
    let gamma = model.stock_count();
    let mut reports = Vec::with_capacity(gamma);
    for alpha in 0..gamma {
        let g = model.states[alpha].factors();
        let r = model.discounts[alpha].gross();
        let mut g_bar = 0.0;
        let mut g_bar2 = 0.0;
        for beta in 0..gamma {
            let w = model.lambda[beta][alpha];
            let kernel = &model.cross[beta][alpha];
            let mut worst1 = f64::NEG_INFINITY;
            let mut worst2 = f64::NEG_INFINITY;
            for h in 0..model.state_count() {
                let row = kernel.row(h);
                let mean: f64 = row.iter().zip(g).map(|(p, gj)| p * gj).sum();
                let second: f64 = row.iter().zip(g).map(|(p, gj)| p * gj * gj).sum();
                worst1 = worst1.max(mean);
                worst2 = worst2.max(second);
            }
            g_bar += w * worst1;
            g_bar2 += w * worst2;
        }
        reports.push(TransversalityReport {
            g_bar,
            g_bar2,
            a1_holds: g_bar < r,
            a2_holds: g_bar2 < r * r,
        });
    }
    reports
}

/// Solved joint moments: `psi1[alpha][rank]`, optionally `psi2`, and the
/// cross-moment map filled in by [`solve_price_product`].
#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    stock_count: usize,
    state_count: usize,
    psi1: Vec<Vec<f64>>,
    psi2: Option<Vec<Vec<f64>>>,
    cross: BTreeMap<(usize, usize), Vec<f64>>,
}

impl JointSolution {
    pub fn stock_count(&self) -> usize {
        self.stock_count
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn joint_dimension(&self) -> usize {
        self.psi1[0].len()
    }

    /// First-moment ratios for one stock, indexed by joint-state rank.
    pub fn psi1(&self, stock: usize) -> &[f64] {
        &self.psi1[stock]
    }

    pub fn psi2(&self, stock: usize) -> Option<&[f64]> {
        self.psi2.as_ref().map(|p| p[stock].as_slice())
    }

    /// Cross-moment ratios for a stock pair. The diagonal is the second
    /// moment; off-diagonal pairs must have been solved beforehand.
    pub fn cross(&self, alpha: usize, beta: usize) -> Option<&[f64]> {
        if alpha == beta {
            return self.psi2(alpha);
        }
        let key = (alpha.min(beta), alpha.max(beta));
        self.cross.get(&key).map(|v| v.as_slice())
    }
}

/// Builds the joint one-step kernel Q over ranked joint states:
/// `Q(a -> j) = prod_alpha mixture_row(alpha, a)[j_alpha]`.
fn joint_kernel(model: &MtdModel) -> Result<Matrix> {
    let n = model.joint_dimension()?;
    let gamma = model.stock_count();
    let mut q = Matrix::zeros(n, n);
    for a_rank in 0..n {
        let a = model.joint_state_of(a_rank);
        let rows: Vec<Vec<f64>> = (0..gamma)
            .map(|alpha| model.mixture_row(alpha, a.indices()))
            .collect();
        for j_rank in 0..n {
            let j = model.joint_state_of(j_rank);
            let mut prob = 1.0;
            for (alpha, row) in rows.iter().enumerate() {
                prob *= row[j.indices()[alpha]];
            }
            q.set(a_rank, j_rank, prob);
        }
    }
    Ok(q)
}

/// Growth factor of stock `alpha` in each ranked joint destination state.
fn joint_growth(model: &MtdModel, alpha: usize) -> Result<Vec<f64>> {
    let n = model.joint_dimension()?;
    Ok((0..n)
        .map(|rank| {
            let state = model.joint_state_of(rank);
            model.states[alpha].factor(state.indices()[alpha])
        })
        .collect())
}

/// Solves `(scale I - Q diag(w)) x = Q (w + extra)` over joint states, the
/// shape shared by all three moment systems.
fn solve_joint_system(
    q: &Matrix,
    weights: &[f64],
    scale: f64,
    extra: impl Fn(usize) -> f64,
) -> Result<Vec<f64>> {
    let n = q.rows();
    let mut a = Matrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let w = weights[j];
            let coeff = if i == j { scale } else { 0.0 };
            a.set(i, j, coeff - q.get(i, j) * w);
            b[i] += q.get(i, j) * (w + extra(j));
        }
    }
    linalg::solve_linear_system(&a, &b)
}

/// First-moment ratios per stock over the joint state space.
///
/// Requires the first-moment transversality condition for every stock.
pub fn solve_joint_psi1(model: &MtdModel) -> Result<JointSolution> {
    let reports = check_multi_conditions(model);
    for (alpha, report) in reports.iter().enumerate() {
        if !report.a1_holds {
            return Err(DdmError::TransversalityViolated {
                condition: Condition::A1,
                g_bar: report.g_bar,
                bound: model.discounts[alpha].gross(),
            });
        }
    }
    let q = joint_kernel(model)?;
    let mut psi1 = Vec::with_capacity(model.stock_count());
    for alpha in 0..model.stock_count() {
        let g = joint_growth(model, alpha)?;
        let r = model.discounts[alpha].gross();
        let solved = solve_joint_system(&q, &g, r, |_| 0.0)?;
        if let Some(v) = solved.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(DdmError::InvalidParameter(format!(
                "joint first-moment solve produced an invalid ratio {v}"
            )));
        }
        psi1.push(solved);
    }
    Ok(JointSolution {
        stock_count: model.stock_count(),
        state_count: model.state_count(),
        psi1,
        psi2: None,
        cross: BTreeMap::new(),
    })
}

/// Adds per-stock second-moment ratios. Requires both condition families.
pub fn solve_joint_psi2(model: &MtdModel, solution: JointSolution) -> Result<JointSolution> {
    check_solution_shape(model, &solution)?;
    let reports = check_multi_conditions(model);
    for (alpha, report) in reports.iter().enumerate() {
        let r = model.discounts[alpha].gross();
        if !report.a2_holds {
            return Err(DdmError::TransversalityViolated {
                condition: Condition::A2,
                g_bar: report.g_bar2,
                bound: r * r,
            });
        }
    }
    let q = joint_kernel(model)?;
    let mut psi2 = Vec::with_capacity(model.stock_count());
    for alpha in 0..model.stock_count() {
        let g = joint_growth(model, alpha)?;
        let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
        let r = model.discounts[alpha].gross();
        let psi1 = &solution.psi1[alpha];
        let solved = solve_joint_system(&q, &g2, r * r, |j| 2.0 * psi1[j] * g2[j])?;
        for (rank, (m2, m1)) in solved.iter().zip(psi1).enumerate() {
            let floor = m1 * m1;
            if !m2.is_finite() || *m2 < floor - 1e-9 * (1.0 + floor) {
                return Err(DdmError::InvalidParameter(format!(
                    "joint second moment {m2} below squared first moment {floor} at rank {rank}"
                )));
            }
        }
        psi2.push(solved);
    }
    Ok(JointSolution {
        psi2: Some(psi2),
        ..solution
    })
}

/// Cross-moment ratios for the pair `(alpha, beta)`, solving
/// `(r_a r_b I - Q diag(g_a g_b)) x = Q (g_a g_b (1 + psi1_a + psi1_b))`.
///
/// The system is canonicalized on the unordered pair, so the result is
/// symmetric in `(alpha, beta)` exactly. Use [`solve_price_product`] to also
/// store the result on the solution.
pub fn price_product_ratios(
    model: &MtdModel,
    solution: &JointSolution,
    alpha: usize,
    beta: usize,
) -> Result<Vec<f64>> {
    check_solution_shape(model, solution)?;
    check_stock_index(model, alpha)?;
    check_stock_index(model, beta)?;
    let reports = check_multi_conditions(model);
    for stock in [alpha, beta] {
        let report = &reports[stock];
        let r = model.discounts[stock].gross();
        if !report.a2_holds {
            return Err(DdmError::TransversalityViolated {
                condition: Condition::A2,
                g_bar: report.g_bar2,
                bound: r * r,
            });
        }
    }
    let (lo, hi) = (alpha.min(beta), alpha.max(beta));
    let q = joint_kernel(model)?;
    let g_lo = joint_growth(model, lo)?;
    let g_hi = joint_growth(model, hi)?;
    let gg: Vec<f64> = g_lo.iter().zip(&g_hi).map(|(a, b)| a * b).collect();
    let scale = model.discounts[lo].gross() * model.discounts[hi].gross();
    let psi_lo = &solution.psi1[lo];
    let psi_hi = &solution.psi1[hi];
    solve_joint_system(&q, &gg, scale, |j| gg[j] * (psi_lo[j] + psi_hi[j]))
}

/// Solves and stores the cross-moment ratios for `(alpha, beta)`.
pub fn solve_price_product(
    model: &MtdModel,
    solution: JointSolution,
    alpha: usize,
    beta: usize,
) -> Result<JointSolution> {
    if alpha == beta {
        // The diagonal is psi2; make sure it exists rather than duplicating it.
        if solution.psi2.is_none() {
            return solve_joint_psi2(model, solution);
        }
        return Ok(solution);
    }
    let ratios = price_product_ratios(model, &solution, alpha, beta)?;
    let mut solution = solution;
    solution
        .cross
        .insert((alpha.min(beta), alpha.max(beta)), ratios);
    Ok(solution)
}

/// Everything at once: psi1, psi2, and all unordered stock pairs.
pub fn solve_full(model: &MtdModel) -> Result<JointSolution> {
    let mut solution = solve_joint_psi2(model, solve_joint_psi1(model)?)?;
    for alpha in 0..model.stock_count() {
        for beta in alpha + 1..model.stock_count() {
            solution = solve_price_product(model, solution, alpha, beta)?;
        }
    }
    Ok(solution)
}

/// Price covariance between two stocks in a given joint state:
/// `d_alpha d_beta (cross(state) - psi1_alpha(state u) psi1_beta(state))`.
///
/// Requires the pair's product ratios (and psi2 for the diagonal) to be
/// present on the solution.
pub fn covariance(
    solution: &JointSolution,
    state: &JointState,
    d_alpha: f64,
    d_beta: f64,
    alpha: usize,
    beta: usize,
) -> Result<f64> {
    if alpha >= solution.stock_count || beta >= solution.stock_count {
        return Err(DdmError::StateOutOfRange {
            index: alpha.max(beta),
            states: solution.stock_count,
        });
    }
    for (name, d) in [("d_alpha", d_alpha), ("d_beta", d_beta)] {
        if !d.is_finite() || d <= 0.0 {
            return Err(DdmError::InvalidParameter(format!(
                "{name} must be positive and finite, got {d}"
            )));
        }
    }
    let rank = rank_for_solution(solution, state)?;
    let cross = solution.cross(alpha, beta).ok_or_else(|| {
        DdmError::InvalidParameter(format!(
            "product ratios for stocks ({alpha}, {beta}) have not been solved"
        ))
    })?;
    let raw = cross[rank] - solution.psi1[alpha][rank] * solution.psi1[beta][rank];
    // The diagonal is a variance; round-off must not push it negative.
    let adjusted = if alpha == beta { raw.max(0.0) } else { raw };
    Ok(d_alpha * d_beta * adjusted)
}

/// Full covariance block for one joint state; `dividends[alpha]` is each
/// stock's current dividend. Symmetric by construction.
pub fn covariance_matrix(
    solution: &JointSolution,
    state: &JointState,
    dividends: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let gamma = solution.stock_count;
    if dividends.len() != gamma {
        return Err(DdmError::DimensionMismatch(format!(
            "{} dividends for {gamma} stocks",
            dividends.len()
        )));
    }
    let mut block = vec![vec![0.0; gamma]; gamma];
    for alpha in 0..gamma {
        for beta in alpha..gamma {
            let value = covariance(
                solution,
                state,
                dividends[alpha],
                dividends[beta],
                alpha,
                beta,
            )?;
            block[alpha][beta] = value;
            block[beta][alpha] = value;
        }
    }
    Ok(block)
}

/// Max-norm residual of the first-moment systems at the stored solution,
/// across every stock and joint state.
pub fn joint_psi1_residual(model: &MtdModel, solution: &JointSolution) -> Result<f64> {
    check_solution_shape(model, solution)?;
    let q = joint_kernel(model)?;
    let n = q.rows();
    let mut worst: f64 = 0.0;
    for alpha in 0..model.stock_count() {
        let g = joint_growth(model, alpha)?;
        let r = model.discounts[alpha].gross();
        let psi1 = &solution.psi1[alpha];
        for i in 0..n {
            // Row of (r I - Q diag(g)) psi1 - Q g.
            let mut acc = r * psi1[i];
            for j in 0..n {
                acc -= q.get(i, j) * g[j] * (psi1[j] + 1.0);
            }
            worst = worst.max(acc.abs());
        }
    }
    Ok(worst)
}

fn check_stock_index(model: &MtdModel, stock: usize) -> Result<()> {
    if stock >= model.stock_count() {
        return Err(DdmError::StateOutOfRange {
            index: stock,
            states: model.stock_count(),
        });
    }
    Ok(())
}

fn check_solution_shape(model: &MtdModel, solution: &JointSolution) -> Result<()> {
    if solution.stock_count != model.stock_count()
        || solution.state_count != model.state_count()
        || solution.psi1[0].len() != model.joint_dimension()?
    {
        return Err(DdmError::DimensionMismatch(
            "solution shape does not match the model".into(),
        ));
    }
    Ok(())
}

fn rank_for_solution(solution: &JointSolution, state: &JointState) -> Result<usize> {
    if state.indices().len() != solution.stock_count {
        return Err(DdmError::DimensionMismatch(format!(
            "joint state has {} components, solution has {} stocks",
            state.indices().len(),
            solution.stock_count
        )));
    }
    let m = solution.state_count;
    let mut rank = 0;
    for &index in state.indices() {
        if index >= m {
            return Err(DdmError::StateOutOfRange { index, states: m });
        }
        rank = rank * m + index;
    }
    Ok(rank)
}
