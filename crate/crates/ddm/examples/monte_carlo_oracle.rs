//! Monte Carlo as a cross-check: simulate the dividend processes the closed
//! forms describe and compare sample means against the formulas. Simulations
//! are deterministic for a fixed seed and bit-identical at any thread count.
//!
//! Run with `cargo run --example monte_carlo_oracle` (set `DDM_SEED` to vary
//! the draws).

use ddm::binomial::{hurley_geometric, BinomialGeometricParams};
use ddm::markov::price_and_risk;
use ddm::sim::{dk_simulate, simulate_dividend_paths, DividendProcess, PathRng, SimConfig};
use ddm::{DiscountRate, GrowthStateSpace, MarkovGrowthModel, TransitionMatrix};

fn main() -> ddm::Result<()> {
    let seed = std::env::var("DDM_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(7u64);
    println!("seed {seed}\n");

    // Binomial process with bankruptcy: the closed form prices the up-drift,
    // the lower bound prices the default branch too. The sample mean lands
    // on the lower bound because simulated paths actually die.
    let params = BinomialGeometricParams {
        d0: 2.0,
        g: 0.06,
        q: 0.6,
        q_b: 0.02,
        k_e: 0.09,
    };
    let closed = hurley_geometric(&params)?;
    let mc = simulate_dividend_paths(
        &DividendProcess::BinomialGeometric(params),
        &SimConfig::new(200_000, seed),
    )?;
    println!("binomial closed form:   {:.4} (default-aware bound {:.4})", closed.value, closed.lower_bound);
    println!(
        "binomial Monte Carlo:   {:.4} +- {:.4} ({} paths, horizon {})",
        mc.mean, mc.std_error, mc.paths, mc.horizon
    );

    // Markov chain: simulated price moments against both solved systems.
    let model = MarkovGrowthModel::new(
        GrowthStateSpace::new(vec![0.95, 1.05])?,
        TransitionMatrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]])?,
        DiscountRate::from_annual(0.10)?,
    )?;
    let solved = price_and_risk(&model, 1, 1.0)?;
    let mc = simulate_dividend_paths(
        &DividendProcess::Markov {
            model: model.clone(),
            initial_state: 1,
            d0: 1.0,
        },
        &SimConfig::new(200_000, seed),
    )?;
    println!("\nmarkov solved price:    {:.4}", solved.price);
    println!("markov Monte Carlo:     {:.4} +- {:.4}", mc.mean, mc.std_error);
    println!("solved second moment:   {:.4}", solved.second_moment);
    println!(
        "sampled second moment:  {:.4} +- {:.4}",
        mc.second_moment, mc.second_moment_std_error
    );
    // Independent lognormal growth and discount draws, valued over a fixed
    // window: no closed form needed, just a seeded estimate with its error.
    let (mean, std_error) = dk_simulate(
        |rng: &mut PathRng| (0.02 + 0.05 * rng.next_gaussian()).exp() - 1.0,
        |rng: &mut PathRng| (0.08 + 0.01 * rng.next_gaussian()).exp() - 1.0,
        1.0,
        &SimConfig::new(100_000, seed).with_horizon(40),
    )?;
    println!("\nstochastic-rate value:  {mean:.4} +- {std_error:.4} (40-year window)");
    Ok(())
}
