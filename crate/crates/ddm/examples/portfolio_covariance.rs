//! Two coupled stocks: each one's next growth state is predicted by a
//! weighted mixture of both current states, so prices co-move and the price
//! covariance per joint state comes out of the same linear-system machinery.
//!
//! Run with `cargo run --example portfolio_covariance`.

use ddm::multivariate::{
    check_multi_conditions, covariance_matrix, solve_full, MtdModel,
};
use ddm::{DiscountRate, GrowthStateSpace, TransitionMatrix};

fn main() -> ddm::Result<()> {
    // A supplier (stock 0) and its customer (stock 1), each with a slump and
    // a boom state. The customer's state carries weight in the supplier's
    // outlook and vice versa.
    let states = vec![
        GrowthStateSpace::new(vec![0.97, 1.06])?,
        GrowthStateSpace::new(vec![0.94, 1.05])?,
    ];
    // lambda[predictor][predicted]: columns sum to 1. The supplier leans
    // 70/30 on itself, the customer 40/60.
    let lambda = vec![vec![0.7, 0.4], vec![0.3, 0.6]];
    let cross = vec![
        vec![
            TransitionMatrix::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]])?,
            TransitionMatrix::from_rows(&[vec![0.6, 0.4], vec![0.25, 0.75]])?,
        ],
        vec![
            TransitionMatrix::from_rows(&[vec![0.55, 0.45], vec![0.35, 0.65]])?,
            TransitionMatrix::from_rows(&[vec![0.75, 0.25], vec![0.4, 0.6]])?,
        ],
    ];
    let discounts = vec![DiscountRate::from_annual(0.09)?, DiscountRate::from_annual(0.11)?];
    let model = MtdModel::new(states, lambda, cross, discounts)?;

    // One report per stock: its mixture growth must clear its own discount.
    for (alpha, report) in check_multi_conditions(&model).iter().enumerate() {
        println!(
            "stock {alpha}: worst mean growth {:.5} vs gross discount {:.2} ({})",
            report.g_bar,
            model.discount(alpha).gross(),
            if report.a1_holds && report.a2_holds { "ok" } else { "diverges" },
        );
    }

    let solution = solve_full(&model)?;
    println!("\njoint state   psi1(supplier)  psi1(customer)");
    for joint in model.enumerate_joint_states()? {
        let rank = model.joint_rank(&joint)?;
        println!(
            "{:?}        {:.6}       {:.6}",
            joint.indices(),
            solution.psi1(0)[rank],
            solution.psi1(1)[rank],
        );
    }

    // Dividends 2.10 and 1.35, both stocks currently booming.
    let boom = model.joint_state_of(3);
    let cov = covariance_matrix(&solution, &boom, &[2.10, 1.35])?;
    println!("\nprice covariance in the joint boom state:");
    for row in &cov {
        println!("  {row:.6?}");
    }
    let correlation = cov[0][1] / (cov[0][0].sqrt() * cov[1][1].sqrt());
    println!("implied price correlation: {correlation:.4}");
    Ok(())
}
