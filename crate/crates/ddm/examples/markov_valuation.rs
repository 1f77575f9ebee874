//! Regime-switching valuation: dividend growth follows a Markov chain over a
//! few discrete states, and each state gets its own price-dividend ratio by
//! solving a small linear system.
//!
//! Run with `cargo run --example markov_valuation`.

use ddm::markov::{check_conditions, price_and_risk, psi1_residual, solve_psi1, solve_psi2};
use ddm::sim::truncated_psi1_series;
use ddm::{DiscountRate, GrowthStateSpace, MarkovGrowthModel, TransitionMatrix};

fn main() -> ddm::Result<()> {
    // Three regimes: contraction (-7%), steady (+2%), expansion (+8%).
    // Contractions are sticky, expansions decay toward steady growth.
    let states = GrowthStateSpace::new(vec![0.93, 1.02, 1.08])?;
    let transition = TransitionMatrix::from_rows(&[
        vec![0.55, 0.35, 0.10],
        vec![0.15, 0.60, 0.25],
        vec![0.10, 0.40, 0.50],
    ])?;
    let model = MarkovGrowthModel::new(states, transition, DiscountRate::from_annual(0.10)?)?;

    // Both moment conditions must hold before either system is solvable.
    let report = check_conditions(&model);
    println!(
        "worst conditional mean growth:   {:.6}  (first condition {})",
        report.g_bar,
        if report.a1_holds { "holds" } else { "fails" }
    );
    println!(
        "worst conditional second moment: {:.6}  (second condition {})",
        report.g_bar2,
        if report.a2_holds { "holds" } else { "fails" }
    );

    let solution = solve_psi2(&model, &solve_psi1(&model)?)?;
    println!("\nstate  factor  psi1      psi2        ratio stdev");
    let spread = solution.ratio_variance().expect("psi2 was just solved");
    for (i, psi1) in solution.psi1().iter().enumerate() {
        println!(
            "{i}      {:.2}    {psi1:.4}   {:.4}   {:.4}",
            model.states().factor(i),
            solution.psi2().expect("psi2 was just solved")[i],
            spread[i].sqrt(),
        );
    }
    println!(
        "\nlinear-system residual: {:.3e}",
        psi1_residual(&model, solution.psi1())
    );

    // A 3.40 dividend observed mid-expansion.
    let risk = price_and_risk(&model, 2, 3.40)?;
    println!("\nprice on a 3.40 dividend in expansion: {:.4}", risk.price);
    println!("price standard deviation:              {:.4}", risk.variance.sqrt());

    // The truncated discounted-mean series approaches the solved ratios from
    // below; the reported tail bound caps what the cutoff can still add.
    let series = truncated_psi1_series(&model, 200)?;
    for (i, partial) in series.values.iter().enumerate() {
        println!(
            "state {i}: 200-term series {partial:.10}, solved {:.10}, tail bound {:.2e}",
            solution.psi1()[i],
            series.tail_bound
        );
    }
    Ok(())
}
