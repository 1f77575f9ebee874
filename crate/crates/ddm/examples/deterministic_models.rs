//! Closed-form prices for the deterministic growth models, all on the same
//! stock: a 2.00 dividend discounted at 9%.
//!
//! Run with `cargo run --example deterministic_models`.

use ddm::deterministic::{
    barsky_growth, gordon_price, h_model_price, quarterly_rate, three_stage_decline_dividends,
    three_stage_price, two_stage_price, BarskyParams, GordonParams, HModelParams,
    ThreeStageParams, TwoStageParams,
};

fn main() -> ddm::Result<()> {
    let d0 = 2.0;
    let k_e = 0.09;

    let gordon = gordon_price(&GordonParams { d0, g: 0.04, k_e })?;
    println!("gordon (g = 4%):                 {gordon:.4}");

    // Ten years at 12% on a 11% required return, then settling to 4% / 9%.
    let two_stage = two_stage_price(&TwoStageParams {
        d0,
        g_h: 0.12,
        k_e_h: 0.11,
        n: 10,
        g_st: 0.04,
        k_e_st: k_e,
    })?;
    println!("two-stage (12% for 10y -> 4%):   {two_stage:.4}");

    // Growth fades linearly from 10% to 4% over 2h = 8 years.
    let h_model = h_model_price(&HModelParams {
        d0,
        g_a: 0.10,
        g_n: 0.04,
        h: 4.0,
        k_e,
    })?;
    println!("H model (10% fading to 4%):      {h_model:.4}");

    // Earnings-driven variant: growth and payout both glide to their stable
    // levels across the decline window.
    let decline = three_stage_decline_dividends(d0, 0.3, 0.6, 0.12, 0.04, 5, 10);
    let three_stage = three_stage_price(&ThreeStageParams {
        eps0: d0,
        pi_a: 0.3,
        pi_n: 0.6,
        g_a: 0.12,
        g_n: 0.04,
        n1: 5,
        n2: 10,
        k_e_h: 0.11,
        k_e_d: 0.10,
        k_e_st: k_e,
        decline_dividends: decline.clone(),
    })?;
    println!("three-stage (5y high, 5y fade):  {three_stage:.4}");
    println!("  decline dividends: {decline:.4?}");

    // Adaptive growth: recent dividend changes dominate, old ones decay.
    let smoothed = barsky_growth(
        &BarskyParams {
            theta: 0.6,
            g0: 0.03,
            dividend_changes: vec![0.05, 0.02, 0.07, 0.04],
        },
        3,
    )?;
    println!("smoothed growth estimate:        {smoothed:.4}");

    let quarterly = quarterly_rate(k_e)?;
    println!("quarterly rate for k_e = 9%:     {quarterly:.6}");
    println!("  compounds back to {:.6}", (1.0 + quarterly).powi(4) - 1.0);
    Ok(())
}
