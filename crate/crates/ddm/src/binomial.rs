//! Binomial and trinomial dividend stream valuations.
//!
//! Dividends move up (or down) by a fixed additive step or growth rate with
//! given probabilities, optionally with a per-period bankruptcy branch that
//! absorbs the stream at zero. All prices come out in closed form; the
//! simulation module cross-checks them by Monte Carlo.

use serde::{Deserialize, Serialize};

use crate::error::{DdmError, Result};

/// Probability sums may miss 1 by at most this before rejection.
const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Up-step / hold / bankruptcy dividend process with an additive step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialAdditiveParams {
    pub d0: f64,
    /// Additive dividend step on an up-move.
    pub delta: f64,
    /// Probability of an up-move.
    pub q: f64,
    /// Probability the dividend drops to zero forever.
    pub q_b: f64,
    pub k_e: f64,
}

/// Same branch structure with a multiplicative growth step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialGeometricParams {
    pub d0: f64,
    /// Growth rate applied on an up-move.
    pub g: f64,
    pub q: f64,
    pub q_b: f64,
    pub k_e: f64,
}

/// Closed-form value together with its bankruptcy-adjusted lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialValue {
    pub value: f64,
    pub lower_bound: f64,
}

/// Outcome list for the n-branch generalizations: each entry pairs a step
/// (additive delta or growth rate) with its probability. The residual
/// probability `1 - sum(q_i)` leaves the dividend unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedOutcomes {
    outcomes: Vec<(f64, f64)>,
}

impl GeneralizedOutcomes {
    /// Validates probabilities: each `q_i >= 0` and their sum at most 1
    /// (within float tolerance).
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self> {
        let mut total = 0.0;
        for (i, (value, q)) in outcomes.iter().enumerate() {
            if !value.is_finite() {
                return Err(DdmError::InvalidParameter(format!(
                    "outcome {i} has a non-finite step"
                )));
            }
            if !q.is_finite() || *q < 0.0 {
                return Err(DdmError::InvalidParameter(format!(
                    "outcome {i} has probability {q}, must be nonnegative"
                )));
            }
            total += q;
        }
        if total > 1.0 + PROBABILITY_TOLERANCE {
            return Err(DdmError::InvalidParameter(format!(
                "outcome probabilities sum to {total}, above 1"
            )));
        }
        Ok(GeneralizedOutcomes { outcomes })
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    /// Implied probability of the no-change branch.
    pub fn residual_probability(&self) -> f64 {
        (1.0 - self.outcomes.iter().map(|(_, q)| q).sum::<f64>()).max(0.0)
    }

    /// Probability-weighted step, the per-period drift.
    pub fn expected_step(&self) -> f64 {
        self.outcomes.iter().map(|(v, q)| v * q).sum()
    }
}

/// Up / down / hold process; `step` is the additive delta or growth rate
/// depending on which valuation consumes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrinomialParams {
    pub d0: f64,
    pub step: f64,
    pub q_u: f64,
    pub q_d: f64,
    pub k_e: f64,
}

/// Additive binomial value and lower bound.
///
/// Value: `d0/k_e + (1/k_e + 1/k_e^2) q delta`. The lower bound replaces
/// each `k_e` denominator with `k_e + q_b` and coincides with the value
/// when `q_b = 0`.
pub fn hurley_additive(p: &BinomialAdditiveParams) -> Result<BinomialValue> {
    check_common(p.d0, p.k_e, p.q, p.q_b)?;
    if !p.delta.is_finite() {
        return Err(DdmError::InvalidParameter("delta must be finite".into()));
    }
    let drift = p.q * p.delta;
    let value = p.d0 / p.k_e + (1.0 / p.k_e + 1.0 / (p.k_e * p.k_e)) * drift;
    let kb = p.k_e + p.q_b;
    let lower_bound = p.d0 * (1.0 - p.q_b) / kb + (1.0 / kb + 1.0 / (kb * kb)) * drift;
    Ok(BinomialValue { value, lower_bound })
}

/// Geometric binomial value and lower bound.
///
/// Value: `d0 (1 + q g) / (k_e - q g)`; the effective drift `q g` must stay
/// below `k_e`. Lower bound: `d0 (1 + q g - q_b) / (k_e - (q g - q_b))`.
pub fn hurley_geometric(p: &BinomialGeometricParams) -> Result<BinomialValue> {
    check_common(p.d0, p.k_e, p.q, p.q_b)?;
    if !p.g.is_finite() || p.g <= -1.0 {
        return Err(DdmError::InvalidParameter(format!(
            "growth must be a finite rate above -1, got {}",
            p.g
        )));
    }
    let drift = p.q * p.g;
    if drift >= p.k_e {
        return Err(DdmError::NonConvergent(format!(
            "effective growth q*g = {drift} must stay below k_e = {}",
            p.k_e
        )));
    }
    let value = p.d0 * (1.0 + drift) / (p.k_e - drift);
    // q_b >= 0 keeps drift - q_b below k_e whenever drift is.
    let adjusted = drift - p.q_b;
    let lower_bound = p.d0 * (1.0 + adjusted) / (p.k_e - adjusted);
    Ok(BinomialValue { value, lower_bound })
}

/// n-outcome additive value: `d0/k_e + (1/k_e + 1/k_e^2) sum(q_i delta_i)`.
pub fn hurley_general_additive(d0: f64, k_e: f64, outcomes: &GeneralizedOutcomes) -> Result<f64> {
    check_common(d0, k_e, 0.0, 0.0)?;
    let drift = outcomes.expected_step();
    Ok(d0 / k_e + (1.0 / k_e + 1.0 / (k_e * k_e)) * drift)
}

/// n-outcome geometric value: `d0 (1 + sum(q_i g_i)) / (k_e - sum(q_i g_i))`.
pub fn hurley_general_geometric(d0: f64, k_e: f64, outcomes: &GeneralizedOutcomes) -> Result<f64> {
    check_common(d0, k_e, 0.0, 0.0)?;
    let drift = outcomes.expected_step();
    if drift >= k_e {
        return Err(DdmError::NonConvergent(format!(
            "effective growth {drift} must stay below k_e = {k_e}"
        )));
    }
    Ok(d0 * (1.0 + drift) / (k_e - drift))
}

/// Trinomial additive value; only the drift `q_u - q_d` enters.
pub fn yao_additive(p: &TrinomialParams) -> Result<f64> {
    check_trinomial(p)?;
    let drift = (p.q_u - p.q_d) * p.step;
    Ok(p.d0 / p.k_e + (1.0 / p.k_e + 1.0 / (p.k_e * p.k_e)) * drift)
}

/// Trinomial geometric value: `d0 (1 + (q_u - q_d) g) / (k_e - (q_u - q_d) g)`.
pub fn yao_geometric(p: &TrinomialParams) -> Result<f64> {
    check_trinomial(p)?;
    let drift = (p.q_u - p.q_d) * p.step;
    if drift >= p.k_e {
        return Err(DdmError::NonConvergent(format!(
            "effective growth {drift} must stay below k_e = {}",
            p.k_e
        )));
    }
    Ok(p.d0 * (1.0 + drift) / (p.k_e - drift))
}

pub(crate) fn check_common(d0: f64, k_e: f64, q: f64, q_b: f64) -> Result<()> {
    if !d0.is_finite() || d0 <= 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "d0 must be positive and finite, got {d0}"
        )));
    }
    if !k_e.is_finite() || k_e <= 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "k_e must be positive and finite, got {k_e}"
        )));
    }
    for (name, prob) in [("q", q), ("q_b", q_b)] {
        if !prob.is_finite() || prob < 0.0 || prob > 1.0 {
            return Err(DdmError::InvalidParameter(format!(
                "{name} must be a probability, got {prob}"
            )));
        }
    }
    if q + q_b > 1.0 + PROBABILITY_TOLERANCE {
        return Err(DdmError::InvalidParameter(format!(
            "q + q_b = {} exceeds 1",
            q + q_b
        )));
    }
    Ok(())
}

pub(crate) fn check_trinomial(p: &TrinomialParams) -> Result<()> {
    check_common(p.d0, p.k_e, p.q_u, p.q_d)?;
    if !p.step.is_finite() {
        return Err(DdmError::InvalidParameter("step must be finite".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::{gordon_price, GordonParams};
    use approx::assert_relative_eq;

    #[test]
    fn additive_direct_substitution() {
        let p = BinomialAdditiveParams {
            d0: 1.0,
            delta: 0.1,
            q: 0.5,
            q_b: 0.0,
            k_e: 0.1,
        };
        let out = hurley_additive(&p).unwrap();
        assert_relative_eq!(out.value, 15.5, max_relative = 1e-12);
        // No bankruptcy branch: the bound is the value itself.
        assert_relative_eq!(out.lower_bound, 15.5, max_relative = 1e-12);
    }

    #[test]
    fn additive_without_upside_is_a_perpetuity() {
        let p = BinomialAdditiveParams {
            d0: 1.0,
            delta: 0.1,
            q: 0.0,
            q_b: 0.0,
            k_e: 0.08,
        };
        assert_relative_eq!(hurley_additive(&p).unwrap().value, 12.5, max_relative = 1e-12);
    }

    #[test]
    fn additive_bankruptcy_lowers_the_bound() {
        let p = BinomialAdditiveParams {
            d0: 1.0,
            delta: 0.1,
            q: 0.5,
            q_b: 0.02,
            k_e: 0.1,
        };
        let out = hurley_additive(&p).unwrap();
        assert!(out.lower_bound < out.value);
    }

    #[test]
    fn geometric_full_upside_is_gordon() {
        let p = BinomialGeometricParams {
            d0: 1.0,
            g: 0.04,
            q: 1.0,
            q_b: 0.0,
            k_e: 0.09,
        };
        let gordon = gordon_price(&GordonParams {
            d0: 1.0,
            g: 0.04,
            k_e: 0.09,
        })
        .unwrap();
        assert_relative_eq!(
            hurley_geometric(&p).unwrap().value,
            gordon,
            max_relative = 1e-14
        );
    }

    #[test]
    fn geometric_direct_substitution() {
        let p = BinomialGeometricParams {
            d0: 1.0,
            g: 0.04,
            q: 0.5,
            q_b: 0.0,
            k_e: 0.07,
        };
        assert_relative_eq!(
            hurley_geometric(&p).unwrap().value,
            20.4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn geometric_rejects_divergent_drift() {
        let p = BinomialGeometricParams {
            d0: 1.0,
            g: 0.2,
            q: 0.6,
            q_b: 0.0,
            k_e: 0.1,
        };
        assert!(matches!(
            hurley_geometric(&p).unwrap_err(),
            DdmError::NonConvergent(_)
        ));
    }

    #[test]
    fn general_additive_single_outcome_matches_binomial() {
        let outcomes = GeneralizedOutcomes::new(vec![(0.1, 0.5)]).unwrap();
        let general = hurley_general_additive(1.0, 0.1, &outcomes).unwrap();
        let binomial = hurley_additive(&BinomialAdditiveParams {
            d0: 1.0,
            delta: 0.1,
            q: 0.5,
            q_b: 0.0,
            k_e: 0.1,
        })
        .unwrap();
        assert_relative_eq!(general, binomial.value, max_relative = 1e-14);
    }

    #[test]
    fn general_additive_symmetric_outcomes_cancel() {
        let outcomes = GeneralizedOutcomes::new(vec![(0.1, 0.3), (-0.1, 0.3)]).unwrap();
        assert_relative_eq!(
            hurley_general_additive(1.0, 0.08, &outcomes).unwrap(),
            12.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn general_additive_three_outcomes() {
        let outcomes =
            GeneralizedOutcomes::new(vec![(0.1, 0.3), (0.0, 0.5), (-0.05, 0.2)]).unwrap();
        assert_relative_eq!(
            hurley_general_additive(1.0, 0.1, &outcomes).unwrap(),
            12.2,
            max_relative = 1e-12
        );
        assert_relative_eq!(outcomes.residual_probability(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn general_geometric_reductions() {
        let single = GeneralizedOutcomes::new(vec![(0.04, 0.5)]).unwrap();
        let general = hurley_general_geometric(1.0, 0.07, &single).unwrap();
        assert_relative_eq!(general, 20.4, max_relative = 1e-12);

        let balanced = GeneralizedOutcomes::new(vec![(0.05, 0.4), (-0.1, 0.2)]).unwrap();
        assert_relative_eq!(
            hurley_general_geometric(1.0, 0.1, &balanced).unwrap(),
            10.0,
            max_relative = 1e-12
        );

        let mixed = GeneralizedOutcomes::new(vec![(0.05, 0.4), (-0.02, 0.3)]).unwrap();
        assert_relative_eq!(
            hurley_general_geometric(1.0, 0.09, &mixed).unwrap(),
            1.014 / 0.076,
            max_relative = 1e-12
        );
    }

    #[test]
    fn outcome_probabilities_validated() {
        assert!(GeneralizedOutcomes::new(vec![(0.1, 0.6), (0.0, 0.5)]).is_err());
        assert!(GeneralizedOutcomes::new(vec![(0.1, -0.1)]).is_err());
        let ok = GeneralizedOutcomes::new(vec![(0.1, 0.6), (0.0, 0.1)]).unwrap();
        assert_relative_eq!(ok.residual_probability(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn yao_symmetric_moves_cancel() {
        let p = TrinomialParams {
            d0: 1.0,
            step: 0.3,
            q_u: 0.25,
            q_d: 0.25,
            k_e: 0.1,
        };
        assert_relative_eq!(yao_additive(&p).unwrap(), 10.0, max_relative = 1e-12);
        assert_relative_eq!(yao_geometric(&p).unwrap(), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn yao_without_downside_matches_binomial() {
        let p = TrinomialParams {
            d0: 1.0,
            step: 0.05,
            q_u: 0.4,
            q_d: 0.0,
            k_e: 0.09,
        };
        let geo = hurley_geometric(&BinomialGeometricParams {
            d0: 1.0,
            g: 0.05,
            q: 0.4,
            q_b: 0.0,
            k_e: 0.09,
        })
        .unwrap();
        assert_relative_eq!(yao_geometric(&p).unwrap(), geo.value, max_relative = 1e-14);

        let add = hurley_additive(&BinomialAdditiveParams {
            d0: 1.0,
            delta: 0.05,
            q: 0.4,
            q_b: 0.0,
            k_e: 0.09,
        })
        .unwrap();
        assert_relative_eq!(yao_additive(&p).unwrap(), add.value, max_relative = 1e-14);
    }

    #[test]
    fn yao_geometric_derived_value() {
        let p = TrinomialParams {
            d0: 1.0,
            step: 0.05,
            q_u: 0.5,
            q_d: 0.2,
            k_e: 0.08,
        };
        assert_relative_eq!(
            yao_geometric(&p).unwrap(),
            1.015 / 0.065,
            max_relative = 1e-12
        );
    }

    #[test]
    fn yao_depends_only_on_drift_and_step() {
        // Regression guard: (q_u, q_d) enter only through their difference.
        let a = TrinomialParams {
            d0: 1.0,
            step: 0.05,
            q_u: 0.5,
            q_d: 0.2,
            k_e: 0.08,
        };
        let b = TrinomialParams {
            d0: 1.0,
            step: 0.05,
            q_u: 0.4,
            q_d: 0.1,
            k_e: 0.08,
        };
        assert_eq!(yao_geometric(&a).unwrap(), yao_geometric(&b).unwrap());
        assert_eq!(yao_additive(&a).unwrap(), yao_additive(&b).unwrap());
    }

    #[test]
    fn geometric_models_match_gordon_with_effective_growth() {
        // Cross-module identity: every geometric variant is the perpetuity
        // at its own probability-weighted growth rate.
        let k_e = 0.09;
        let cases: Vec<(f64, f64)> = vec![
            (0.5 * 0.04, {
                hurley_geometric(&BinomialGeometricParams {
                    d0: 1.0,
                    g: 0.04,
                    q: 0.5,
                    q_b: 0.0,
                    k_e,
                })
                .unwrap()
                .value
            }),
            (0.4 * 0.05 + 0.3 * (-0.02), {
                let o = GeneralizedOutcomes::new(vec![(0.05, 0.4), (-0.02, 0.3)]).unwrap();
                hurley_general_geometric(1.0, k_e, &o).unwrap()
            }),
            ((0.5 - 0.2) * 0.05, {
                yao_geometric(&TrinomialParams {
                    d0: 1.0,
                    step: 0.05,
                    q_u: 0.5,
                    q_d: 0.2,
                    k_e,
                })
                .unwrap()
            }),
        ];
        for (effective_g, value) in cases {
            let gordon = gordon_price(&GordonParams {
                d0: 1.0,
                g: effective_g,
                k_e,
            })
            .unwrap();
            assert_relative_eq!(value, gordon, max_relative = 1e-12);
        }
    }
}
