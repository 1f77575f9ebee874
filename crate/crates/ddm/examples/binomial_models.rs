//! Lattice-style valuation: dividends that move up, hold, or default each
//! period, in additive and geometric flavours, plus the n-outcome and
//! up/down/hold generalizations.
//!
//! Run with `cargo run --example binomial_models`.

use ddm::binomial::{
    hurley_additive, hurley_general_geometric, hurley_geometric, yao_geometric,
    BinomialAdditiveParams, BinomialGeometricParams, GeneralizedOutcomes, TrinomialParams,
};

fn main() -> ddm::Result<()> {
    // Dividend rises by 0.10 with probability 0.6 and holds otherwise;
    // no default risk yet.
    let safe = hurley_additive(&BinomialAdditiveParams {
        d0: 2.0,
        delta: 0.10,
        q: 0.6,
        q_b: 0.0,
        k_e: 0.09,
    })?;
    println!("additive, no bankruptcy:   {:.4}", safe.value);

    // Same dynamics with a 2% chance per period that the dividend dies.
    // The headline value ignores default; the lower bound prices it in.
    let risky = hurley_additive(&BinomialAdditiveParams {
        d0: 2.0,
        delta: 0.10,
        q: 0.6,
        q_b: 0.02,
        k_e: 0.09,
    })?;
    println!("additive, 2% bankruptcy:   {:.4}", risky.value);
    println!("  default-aware bound:     {:.4}", risky.lower_bound);

    // Geometric version: up 6% with probability 0.6, hold otherwise.
    let geometric = hurley_geometric(&BinomialGeometricParams {
        d0: 2.0,
        g: 0.06,
        q: 0.6,
        q_b: 0.02,
        k_e: 0.09,
    })?;
    println!("geometric, 2% bankruptcy:  {:.4}", geometric.value);
    println!("  default-aware bound:     {:.4}", geometric.lower_bound);

    // More than two outcomes: a five-point distribution over growth rates.
    // Probabilities sum to 0.98; the residual 2% holds the dividend flat.
    let outcomes = GeneralizedOutcomes::new(vec![
        (-0.08, 0.10),
        (-0.02, 0.20),
        (0.02, 0.30),
        (0.06, 0.28),
        (0.10, 0.10),
    ])?;
    println!("  implied hold branch:     {:.4}", outcomes.residual_probability());
    let general = hurley_general_geometric(2.0, 0.09, &outcomes)?;
    println!("five-outcome geometric:    {general:.4}");

    // Up/down/hold: only the net drift (q_u - q_d) * step prices in.
    let trinomial = yao_geometric(&TrinomialParams {
        d0: 2.0,
        step: 0.06,
        q_u: 0.5,
        q_d: 0.3,
        k_e: 0.09,
    })?;
    println!("trinomial geometric:       {trinomial:.4}");
    Ok(())
}
