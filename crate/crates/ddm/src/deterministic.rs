//! Closed-form deterministic dividend discount valuations.
//!
//! Covers the constant-growth perpetuity, the two-phase model with a stable
//! terminal phase, the H-model with linearly declining growth, a three-phase
//! model with variable payout, an IMA-style smoothed growth estimate, and a
//! quarterly compounding helper.

use serde::{Deserialize, Serialize};

use crate::error::{DdmError, Result};

/// Constant-growth perpetuity inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GordonParams {
    /// Current dividend D(t).
    pub d0: f64,
    /// Constant dividend growth rate.
    pub g: f64,
    /// Annual cost of equity.
    pub k_e: f64,
}

/// Price of a perpetuity growing at `g` forever: `d0 (1+g) / (k_e - g)`.
///
/// Finite only when `g < k_e`; anything else diverges and is rejected.
pub fn gordon_price(p: &GordonParams) -> Result<f64> {
    check_positive("d0", p.d0)?;
    check_positive("k_e", p.k_e)?;
    check_rate("g", p.g)?;
    if p.g >= p.k_e {
        return Err(DdmError::NonConvergent(format!(
            "growth {} must stay below the discount rate {}",
            p.g, p.k_e
        )));
    }
    Ok(p.d0 * (1.0 + p.g) / (p.k_e - p.g))
}

/// Two-phase inputs: `n` years of high growth, then a stable perpetuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStageParams {
    pub d0: f64,
    /// High-phase growth rate.
    pub g_h: f64,
    /// High-phase discount rate.
    pub k_e_h: f64,
    /// High-phase length in years, at least 1.
    pub n: u32,
    /// Stable-phase growth rate.
    pub g_st: f64,
    /// Stable-phase discount rate.
    pub k_e_st: f64,
}

/// Two-phase price: a growing annuity over the first `n` years plus the
/// discounted stable-phase perpetuity seeded with `D(n) = d0 (1+g_h)^n`.
///
/// When `g_h` equals `k_e_h` the annuity closed form is 0/0; the first phase
/// is then summed term by term (its limit), not treated as an error.
pub fn two_stage_price(p: &TwoStageParams) -> Result<f64> {
    check_positive("d0", p.d0)?;
    check_positive("k_e_h", p.k_e_h)?;
    check_positive("k_e_st", p.k_e_st)?;
    check_rate("g_h", p.g_h)?;
    check_rate("g_st", p.g_st)?;
    if p.n < 1 {
        return Err(DdmError::InvalidParameter(
            "high phase must last at least one year".into(),
        ));
    }
    if p.g_st >= p.k_e_st {
        return Err(DdmError::NonConvergent(format!(
            "stable growth {} must stay below the stable discount rate {}",
            p.g_st, p.k_e_st
        )));
    }
    let x = (1.0 + p.g_h) / (1.0 + p.k_e_h);
    let annuity = if (p.k_e_h - p.g_h).abs() < 1e-12 {
        // Removable singularity: sum the n discounted terms directly.
        (1..=p.n).map(|i| p.d0 * x.powi(i as i32)).sum()
    } else {
        p.d0 * (1.0 + p.g_h) * (1.0 - x.powi(p.n as i32)) / (p.k_e_h - p.g_h)
    };
    let d_n = p.d0 * (1.0 + p.g_h).powi(p.n as i32);
    let terminal = d_n * (1.0 + p.g_st) / (p.k_e_st - p.g_st) / (1.0 + p.k_e_h).powi(p.n as i32);
    Ok(annuity + terminal)
}

/// H-model inputs: growth declines linearly from `g_a` to `g_n` over `2h` years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HModelParams {
    pub d0: f64,
    /// Growth rate at the start of the decline.
    pub g_a: f64,
    /// Stable growth rate after the decline.
    pub g_n: f64,
    /// Half the decline length in years; 0 collapses the high phase.
    pub h: f64,
    pub k_e: f64,
}

/// H-model price: `d0 (1+g_a) / (k_e - g_n) + d0 h (g_a - g_n) / (k_e - g_n)`.
///
/// The level term keeps `(1 + g_a)`; several textbook variants print
/// `(1 + g_n)` there instead. This implementation follows the former and the
/// choice is load-bearing: with `g_a = g_n` it makes the reduction to
/// [`gordon_price`] exact. Either way the formula is an approximation of a
/// literal linear-decline schedule, not its exact discounted sum.
pub fn h_model_price(p: &HModelParams) -> Result<f64> {
    check_positive("d0", p.d0)?;
    check_positive("k_e", p.k_e)?;
    check_rate("g_a", p.g_a)?;
    check_rate("g_n", p.g_n)?;
    if !p.h.is_finite() || p.h < 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "half-life h must be nonnegative, got {}",
            p.h
        )));
    }
    if p.g_n >= p.k_e {
        return Err(DdmError::NonConvergent(format!(
            "stable growth {} must stay below the discount rate {}",
            p.g_n, p.k_e
        )));
    }
    Ok(p.d0 * (1.0 + p.g_a) / (p.k_e - p.g_n) + p.d0 * p.h * (p.g_a - p.g_n) / (p.k_e - p.g_n))
}

/// Three-phase inputs: high growth on earnings with payout `pi_a`, an
/// explicit declining dividend list, then a stable perpetuity at payout `pi_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeStageParams {
    /// Earnings per share at time t.
    pub eps0: f64,
    /// Payout ratio during the high phase, in [0, 1].
    pub pi_a: f64,
    /// Payout ratio in the stable phase, in [0, 1].
    pub pi_n: f64,
    /// High-phase earnings growth.
    pub g_a: f64,
    /// Stable-phase growth.
    pub g_n: f64,
    /// Last year of the high phase (inclusive).
    pub n1: u32,
    /// Last year of the declining phase; `n1 <= n2`.
    pub n2: u32,
    /// Discount rates for the high, declining, and stable phases.
    pub k_e_h: f64,
    pub k_e_d: f64,
    pub k_e_st: f64,
    /// Dividends D(t+i) for i in (n1, n2], one per declining-phase year.
    /// [`three_stage_decline_dividends`] builds the interpolated default.
    pub decline_dividends: Vec<f64>,
}

/// Declining-phase dividends with growth and payout both interpolated
/// linearly from `(g_a, pi_a)` at year n1 to `(g_n, pi_n)` at year n2.
///
/// Earnings compound at the interpolated growth each year; the dividend is
/// earnings times the interpolated payout. Returns one value per year in
/// (n1, n2], so an empty vector when n1 = n2.
pub fn three_stage_decline_dividends(
    eps0: f64,
    pi_a: f64,
    pi_n: f64,
    g_a: f64,
    g_n: f64,
    n1: u32,
    n2: u32,
) -> Vec<f64> {
    let mut dividends = Vec::with_capacity((n2 - n1) as usize);
    let mut eps = eps0 * (1.0 + g_a).powi(n1 as i32);
    let span = (n2 - n1) as f64;
    for i in n1 + 1..=n2 {
        let tau = (i - n1) as f64 / span;
        let growth = g_a + (g_n - g_a) * tau;
        let payout = pi_a + (pi_n - pi_a) * tau;
        eps *= 1.0 + growth;
        dividends.push(eps * payout);
    }
    dividends
}

/// Three-phase price: discounted high-phase dividends for i = 0..n1, the
/// supplied declining-phase dividends discounted at the declining rate, and
/// a stable perpetuity discounted through both earlier phases.
///
/// The terminal term grows the final declining-phase dividend (or the last
/// high-phase dividend at payout `pi_n` when the decline is empty) one
/// stable step and prices it as a perpetuity.
pub fn three_stage_price(p: &ThreeStageParams) -> Result<f64> {
    check_positive("eps0", p.eps0)?;
    check_positive("k_e_h", p.k_e_h)?;
    check_positive("k_e_d", p.k_e_d)?;
    check_positive("k_e_st", p.k_e_st)?;
    check_rate("g_a", p.g_a)?;
    check_rate("g_n", p.g_n)?;
    for (name, payout) in [("pi_a", p.pi_a), ("pi_n", p.pi_n)] {
        if !payout.is_finite() || !(0.0..=1.0).contains(&payout) {
            return Err(DdmError::InvalidParameter(format!(
                "{name} must lie in [0, 1], got {payout}"
            )));
        }
    }
    if p.n1 > p.n2 {
        return Err(DdmError::InvalidParameter(format!(
            "phase boundaries must satisfy n1 <= n2, got {} > {}",
            p.n1, p.n2
        )));
    }
    if p.decline_dividends.len() != (p.n2 - p.n1) as usize {
        return Err(DdmError::DimensionMismatch(format!(
            "expected {} declining-phase dividends, got {}",
            p.n2 - p.n1,
            p.decline_dividends.len()
        )));
    }
    if p.g_n >= p.k_e_st {
        return Err(DdmError::NonConvergent(format!(
            "stable growth {} must stay below the stable discount rate {}",
            p.g_n, p.k_e_st
        )));
    }

    let high: f64 = (0..=p.n1)
        .map(|i| p.eps0 * p.pi_a * (1.0 + p.g_a).powi(i as i32) / (1.0 + p.k_e_h).powi(i as i32))
        .sum();

    let mut decline = 0.0;
    for (offset, dividend) in p.decline_dividends.iter().enumerate() {
        let i = p.n1 as i32 + 1 + offset as i32;
        decline += dividend / (1.0 + p.k_e_d).powi(i);
    }

    // Final pre-terminal dividend at the stable payout.
    let last = match p.decline_dividends.last() {
        Some(d) => *d,
        None => p.eps0 * (1.0 + p.g_a).powi(p.n1 as i32) * p.pi_n,
    };
    let terminal = last * (1.0 + p.g_n)
        / ((p.k_e_st - p.g_n)
            * (1.0 + p.k_e_h).powi(p.n1 as i32)
            * (1.0 + p.k_e_d).powi((p.n2 - p.n1) as i32));

    Ok(high + decline + terminal)
}

/// Smoothed growth estimate inputs: `dividend_changes[i]` holds the dividend
/// change observed at period i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarskyParams {
    /// Smoothing weight in [0, 1); 0 means no memory.
    pub theta: f64,
    /// Growth estimate at period 0.
    pub g0: f64,
    pub dividend_changes: Vec<f64>,
}

/// Exponentially weighted growth estimate at period `t`:
/// `(1-theta) * sum_{i=0..t} theta^i * change(t-i) + theta^t * g0`.
pub fn barsky_growth(p: &BarskyParams, t: usize) -> Result<f64> {
    if !p.theta.is_finite() || !(0.0..1.0).contains(&p.theta) {
        return Err(DdmError::InvalidParameter(format!(
            "theta must lie in [0, 1), got {}",
            p.theta
        )));
    }
    if p.dividend_changes.len() < t + 1 {
        return Err(DdmError::InsufficientHistory {
            needed: t + 1,
            got: p.dividend_changes.len(),
        });
    }
    let mut weighted = 0.0;
    let mut theta_pow = 1.0;
    for i in 0..=t {
        weighted += theta_pow * p.dividend_changes[t - i];
        theta_pow *= p.theta;
    }
    // theta_pow is now theta^(t+1); recompute theta^t directly instead.
    Ok((1.0 - p.theta) * weighted + p.theta.powi(t as i32) * p.g0)
}

/// Quarterly rate equivalent to the annual rate `k_e` under compounding:
/// `(1 + k_e)^{1/4} - 1`, so four quarters compound back to `k_e` exactly.
///
/// Some printed sources state this as `(1 - k_e)^{1/4} - 1`, which fails the
/// round-trip identity `(1 + r_q)^4 = 1 + k_e` and is treated as a typo here.
pub fn quarterly_rate(k_e: f64) -> Result<f64> {
    if !k_e.is_finite() || k_e <= -1.0 {
        return Err(DdmError::InvalidParameter(format!(
            "annual rate must exceed -1, got {k_e}"
        )));
    }
    Ok((1.0 + k_e).powf(0.25) - 1.0)
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(DdmError::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    // Growth below -100% would flip dividend signs.
    if !value.is_finite() || value <= -1.0 {
        return Err(DdmError::InvalidParameter(format!(
            "{name} must be a finite rate above -1, got {value}"
        )));
    }
    Ok(())
}
