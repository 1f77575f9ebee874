//! Price-dividend ratios for a dividend stream whose gross growth factor
//! follows a finite Markov chain.
//!
//! The fundamental price per unit dividend in state i solves a linear
//! fixed-point system; its second moment solves a second system built on the
//! first. Both are finite only under transversality bounds on the chain's
//! one-step growth moments.

use crate::error::{Condition, DdmError, Result};
use crate::linalg::{self, Matrix};
use crate::types::{MarkovGrowthModel, PriceDividendSolution};

/// Worst-state one-step growth moments against their divergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransversalityReport {
    /// Largest one-step conditional mean growth factor.
    pub g_bar: f64,
    /// Largest one-step conditional second moment of the growth factor.
    pub g_bar2: f64,
    /// First-moment condition: `g_bar < r`.
    pub a1_holds: bool,
    /// Second-moment condition: `g_bar2 < r^2`.
    pub a2_holds: bool,
}

/// Evaluates both transversality conditions. Never fails; divergent models
/// simply report failing flags.
pub fn check_conditions(model: &MarkovGrowthModel) -> TransversalityReport {
    let g = model.states().factors();
    let r = model.discount().gross();
    let mut g_bar = f64::NEG_INFINITY;
    let mut g_bar2 = f64::NEG_INFINITY;
    for i in 0..model.state_count() {
        let row = model.transition().row(i);
        let mean: f64 = row.iter().zip(g).map(|(p, gj)| p * gj).sum();
        let second: f64 = row.iter().zip(g).map(|(p, gj)| p * gj * gj).sum();
        g_bar = g_bar.max(mean);
        g_bar2 = g_bar2.max(second);
    }
    TransversalityReport {
        g_bar,
        g_bar2,
        a1_holds: g_bar < r,
        a2_holds: g_bar2 < r * r,
    }
}

/// Solves the first-moment ratios: `(r I - P diag(g)) psi1 = P g`.
///
/// Requires the first transversality condition; the solution is unique and
/// nonnegative when it holds.
pub fn solve_psi1(model: &MarkovGrowthModel) -> Result<PriceDividendSolution> {
    let report = check_conditions(model);
    let r = model.discount().gross();
    if !report.a1_holds {
        return Err(DdmError::TransversalityViolated {
            condition: Condition::A1,
            g_bar: report.g_bar,
            bound: r,
        });
    }
    let g = model.states().factors();
    let (a, b) = moment_system(model.transition().matrix(), g, r, |gj| gj, |_| 0.0);
    let psi1 = linalg::solve_linear_system(&a, &b)?;
    PriceDividendSolution::first_order(psi1)
}

/// Adds the second-moment ratios to an existing first-order solution:
/// `(r^2 I - P diag(g^2)) psi2 = P (g^2 (1 + 2 psi1))`.
///
/// Requires both transversality conditions.
pub fn solve_psi2(
    model: &MarkovGrowthModel,
    first: &PriceDividendSolution,
) -> Result<PriceDividendSolution> {
    if first.state_count() != model.state_count() {
        return Err(DdmError::DimensionMismatch(format!(
            "solution has {} states, model has {}",
            first.state_count(),
            model.state_count()
        )));
    }
    let report = check_conditions(model);
    let r = model.discount().gross();
    if !report.a2_holds {
        return Err(DdmError::TransversalityViolated {
            condition: Condition::A2,
            g_bar: report.g_bar2,
            bound: r * r,
        });
    }
    let g = model.states().factors();
    let psi1 = first.psi1();
    let (a, b) = moment_system(
        model.transition().matrix(),
        g,
        r * r,
        |gj| gj * gj,
        |j| 2.0 * psi1[j] * g[j] * g[j],
    );
    let psi2 = linalg::solve_linear_system(&a, &b)?;
    PriceDividendSolution::with_second_order(psi1.to_vec(), psi2)
}

/// Builds `(scale I - P diag(weight)) x = P (weight + extra)` coefficient
/// and right-hand sides shared by both moment systems.
fn moment_system(
    p: &Matrix,
    g: &[f64],
    scale: f64,
    weight: impl Fn(f64) -> f64,
    extra: impl Fn(usize) -> f64,
) -> (Matrix, Vec<f64>) {
    let m = p.rows();
    let mut a = Matrix::zeros(m, m);
    let mut b = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            let w = weight(g[j]);
            let coeff = if i == j { scale } else { 0.0 };
            a.set(i, j, coeff - p.get(i, j) * w);
            b[i] += p.get(i, j) * (w + extra(j));
        }
    }
    (a, b)
}

/// Price, second moment, and variance of the fundamental price for a stock
/// currently in `state` paying dividend `dividend`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceAndRisk {
    pub price: f64,
    pub second_moment: f64,
    pub variance: f64,
}

/// Solves both moment systems and scales them by the current dividend:
/// price `d psi1[s]`, second moment `d^2 psi2[s]`, variance
/// `d^2 (psi2[s] - psi1[s]^2)` clamped at zero against round-off.
pub fn price_and_risk(
    model: &MarkovGrowthModel,
    current_state: usize,
    dividend: f64,
) -> Result<PriceAndRisk> {
    if current_state >= model.state_count() {
        return Err(DdmError::StateOutOfRange {
            index: current_state,
            states: model.state_count(),
        });
    }
    if !dividend.is_finite() || dividend <= 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "dividend must be positive and finite, got {dividend}"
        )));
    }
    let solution = solve_psi2(model, &solve_psi1(model)?)?;
    let psi1 = solution.psi1()[current_state];
    let psi2 = solution.psi2().expect("second order just solved")[current_state];
    Ok(PriceAndRisk {
        price: dividend * psi1,
        second_moment: dividend * dividend * psi2,
        variance: dividend * dividend * (psi2 - psi1 * psi1).max(0.0),
    })
}

/// Max-norm residual of the first-moment fixed-point system at `psi1`.
pub fn psi1_residual(model: &MarkovGrowthModel, psi1: &[f64]) -> f64 {
    let g = model.states().factors();
    let r = model.discount().gross();
    let (a, b) = moment_system(model.transition().matrix(), g, r, |gj| gj, |_| 0.0);
    linalg::max_residual(&a, psi1, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{DiscountRate, GrowthStateSpace, TransitionMatrix};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(factors: Vec<f64>, rows: &[Vec<f64>], k_e: f64) -> MarkovGrowthModel {
        MarkovGrowthModel::new(
            GrowthStateSpace::new(factors).unwrap(),
            TransitionMatrix::from_rows(rows).unwrap(),
            DiscountRate::from_annual(k_e).unwrap(),
        )
        .unwrap()
    }

    fn two_state() -> MarkovGrowthModel {
        // Reference chain used across the suite: state 0 cuts dividends 5%,
        // state 1 grows them 5%, and the grow state is sticky.
        model(vec![0.95, 1.05], &[vec![0.7, 0.3], vec![0.2, 0.8]], 0.1)
    }

    #[test]
    fn conditions_single_state() {
        let m = model(vec![1.0], &[vec![1.0]], 0.1);
        let report = check_conditions(&m);
        assert_relative_eq!(report.g_bar, 1.0);
        assert_relative_eq!(report.g_bar2, 1.0);
        assert!(report.a1_holds && report.a2_holds);
    }

    #[test]
    fn conditions_direct_substitution() {
        let m = model(vec![0.95, 1.05], &[vec![0.5, 0.5], vec![0.5, 0.5]], 0.1);
        let report = check_conditions(&m);
        assert_relative_eq!(report.g_bar, 1.0, max_relative = 1e-12);
        assert_relative_eq!(report.g_bar2, 1.0025, max_relative = 1e-12);
        assert!(report.a1_holds && report.a2_holds);
    }

    #[test]
    fn conditions_flag_divergent_growth() {
        let m = model(vec![1.2], &[vec![1.0]], 0.1);
        let report = check_conditions(&m);
        assert!(!report.a1_holds);
        assert!(matches!(
            solve_psi1(&m).unwrap_err(),
            DdmError::TransversalityViolated {
                condition: Condition::A1,
                ..
            }
        ));
    }

    #[test]
    fn single_state_matches_perpetuity() {
        let m = model(vec![1.0], &[vec![1.0]], 0.1);
        let sol = solve_psi1(&m).unwrap();
        assert_relative_eq!(sol.psi1()[0], 10.0, max_relative = 1e-12);
    }

    #[test]
    fn identical_rows_collapse_ratios() {
        let m = model(vec![0.95, 1.05], &[vec![0.5, 0.5], vec![0.5, 0.5]], 0.1);
        let sol = solve_psi1(&m).unwrap();
        assert_relative_eq!(sol.psi1()[0], 10.0, max_relative = 1e-12);
        assert_relative_eq!(sol.psi1()[1], 10.0, max_relative = 1e-12);
    }

    #[test]
    fn two_state_frozen_solution() {
        // Frozen from an independent solve of the same linear system.
        // State 0 shrinks (0.95), state 1 grows (1.05).
        let m = two_state();
        let sol = solve_psi2(&m, &solve_psi1(&m).unwrap()).unwrap();
        assert_relative_eq!(sol.psi1()[0], 10.877934272300461, max_relative = 1e-12);
        assert_relative_eq!(sol.psi1()[1], 11.91079812206572, max_relative = 1e-12);
        let psi2 = sol.psi2().unwrap();
        assert_relative_eq!(psi2[0], 123.16839478929549, max_relative = 1e-11);
        assert_relative_eq!(psi2[1], 147.04871164357385, max_relative = 1e-11);
        let var = sol.ratio_variance().unwrap();
        assert_relative_eq!(var[0], 4.838940756806522, max_relative = 1e-9);
        assert_relative_eq!(var[1], 5.181599738969538, max_relative = 1e-9);
        let report = check_conditions(&m);
        assert_relative_eq!(report.g_bar, 1.03, max_relative = 1e-12);
        assert_relative_eq!(report.g_bar2, 1.0625, max_relative = 1e-12);
    }

    #[test]
    fn psi2_single_state_value() {
        let m = model(vec![1.0], &[vec![1.0]], 0.1);
        let sol = solve_psi2(&m, &solve_psi1(&m).unwrap()).unwrap();
        assert_relative_eq!(sol.psi2().unwrap()[0], 100.0, max_relative = 1e-12);
    }

    #[test]
    fn deterministic_chain_has_zero_variance() {
        for g in [0.9, 1.0, 1.04] {
            let m = model(vec![g], &[vec![1.0]], 0.1);
            let sol = solve_psi2(&m, &solve_psi1(&m).unwrap()).unwrap();
            let var = sol.ratio_variance().unwrap()[0];
            assert!(var < 1e-10, "variance {var} for g={g}");
        }
    }

    #[test]
    fn psi2_requires_second_condition() {
        // Mean growth 0.95 < 1.05, but the spread pushes the second moment
        // 0.5*(0.25 + 1.96) = 1.105 above r^2 = 1.1025: a1 holds, a2 fails.
        let m = model(vec![0.5, 1.4], &[vec![0.5, 0.5], vec![0.5, 0.5]], 0.05);
        let report = check_conditions(&m);
        assert!(report.a1_holds);
        assert!(!report.a2_holds);
        let first = solve_psi1(&m).unwrap();
        assert!(matches!(
            solve_psi2(&m, &first).unwrap_err(),
            DdmError::TransversalityViolated {
                condition: Condition::A2,
                ..
            }
        ));
    }

    #[test]
    fn price_and_risk_scales_by_dividend() {
        let m = model(vec![1.0], &[vec![1.0]], 0.1);
        let out = price_and_risk(&m, 0, 2.0).unwrap();
        assert_relative_eq!(out.price, 20.0, max_relative = 1e-12);
        assert_relative_eq!(out.second_moment, 400.0, max_relative = 1e-12);
        assert!(out.variance.abs() < 1e-9);
    }

    #[test]
    fn price_and_risk_checks_the_state_index() {
        let m = two_state();
        assert!(matches!(
            price_and_risk(&m, 2, 1.0).unwrap_err(),
            DdmError::StateOutOfRange { index: 2, states: 2 }
        ));
        assert!(price_and_risk(&m, 0, 0.0).is_err());
    }

    #[test]
    fn solution_satisfies_fixed_point() {
        let m = two_state();
        let sol = solve_psi1(&m).unwrap();
        assert!(psi1_residual(&m, sol.psi1()) < 1e-12);
    }

    proptest! {
        // Random valid chains: psi1 nonnegative, residual tiny, and raising
        // the discount rate lowers every ratio.
        #[test]
        fn random_models_behave(
            g_lo in 0.85f64..0.98,
            g_spread in 0.02f64..0.1,
            p00 in 0.05f64..0.95,
            p10 in 0.05f64..0.95,
            k_e in 0.09f64..0.2,
        ) {
            let m = model(
                vec![g_lo, g_lo + g_spread],
                &[vec![p00, 1.0 - p00], vec![p10, 1.0 - p10]],
                k_e,
            );
            prop_assume!(check_conditions(&m).a1_holds);
            let sol = solve_psi1(&m).unwrap();
            prop_assert!(sol.psi1().iter().all(|v| *v >= 0.0));
            prop_assert!(psi1_residual(&m, sol.psi1()) < 1e-10);

            let higher = MarkovGrowthModel::new(
                m.states().clone(),
                m.transition().clone(),
                DiscountRate::from_annual(k_e + 0.02).unwrap(),
            ).unwrap();
            let sol_hi = solve_psi1(&higher).unwrap();
            for (lo, hi) in sol.psi1().iter().zip(sol_hi.psi1()) {
                prop_assert!(hi < lo);
            }
        }
    }
}
