//! End-to-end estimation: a dividend history becomes growth rates, the rates
//! get binned into states, the transition matrix is fit by counting, the
//! discount rate comes from a market regression, and the resulting model is
//! priced.
//!
//! Run with `cargo run --example estimate_from_history`.

use chrono::NaiveDate;
use ddm::estimation::{
    capm_cost_of_equity, discretize_states, estimate_transition_matrix, growth_series,
    CapmInputs, RiskFree,
};
use ddm::markov::price_and_risk;
use ddm::{DiscountRate, DividendSeries, MarkovGrowthModel};

fn main() -> ddm::Result<()> {
    // Sixteen years of annual dividends: lean years early, steadier later.
    let payouts = [
        1.00, 0.96, 1.02, 1.08, 1.04, 1.12, 1.19, 1.25, 1.21, 1.30, 1.38, 1.45, 1.41, 1.51,
        1.60, 1.69,
    ];
    let observations = payouts
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let date = NaiveDate::from_ymd_opt(2010 + i as i32, 6, 30).expect("valid date");
            (date, *d)
        })
        .collect();
    let series = DividendSeries::new("ACME", observations)?;

    let growth = growth_series(&series)?;
    println!("growth observations: {}", growth.len());

    // Two regimes split at the median growth rate.
    let bins = discretize_states(&growth, 2)?;
    println!("state factors:       {:.4?}", bins.states.factors());
    println!("state path:          {:?}", bins.indices);

    let transition = estimate_transition_matrix(&bins.indices, 2, 0.5)?;
    for i in 0..2 {
        println!("transition from {i}:   {:.4?}", transition.row(i));
    }

    // Discount rate from a market regression on a short return sample.
    let capm = capm_cost_of_equity(&CapmInputs {
        stock_returns: vec![0.12, 0.01, 0.16, 0.09, -0.03, 0.13, 0.11, 0.04, 0.17, 0.03],
        market_returns: vec![0.10, 0.02, 0.13, 0.08, -0.01, 0.11, 0.09, 0.05, 0.14, 0.04],
        risk_free: RiskFree::Constant(0.03),
    })?;
    println!(
        "\nmarket regression:   beta {:.3}, alpha {:.4}, cost of equity {:.4}",
        capm.beta, capm.alpha, capm.k_e
    );

    let model = MarkovGrowthModel::new(
        bins.states.clone(),
        transition,
        DiscountRate::from_annual(capm.k_e)?,
    )?;
    let current_state = *bins.indices.last().expect("nonempty path");
    let valuation = price_and_risk(&model, current_state, series.last_dividend())?;
    println!(
        "\nlast dividend {:.2} in state {current_state}: price {:.4}, stdev {:.4}",
        series.last_dividend(),
        valuation.price,
        valuation.variance.sqrt()
    );
    Ok(())
}
