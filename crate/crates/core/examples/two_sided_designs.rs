//! Symmetric, unbiased and quasi-unbiased two-sided limits.
//!
//! The unbiased design with estimated variance nests two root searches over
//! the mixed distribution and takes about a minute.

use sewma::design::{solve_two_sided_arl_unbiased, DesignSolver};
use sewma::{ChartConfig, DesignTarget, PhaseIConfig, TwoSidedVariant};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::two_sided(0.1, 5)?;
    let known = solve_two_sided_arl_unbiased(&config, 500.0)?;
    println!("ARL-unbiased, E(L)=500: {:?}", known.limits);

    let target = DesignTarget::quantile(1000, 0.25)?;
    let phase1 = PhaseIConfig::for_chart(50, &config)?;
    let solver = DesignSolver::default();
    for variant in [
        TwoSidedVariant::Symmetric,
        TwoSidedVariant::QuasiUnbiased,
        TwoSidedVariant::Unbiased,
    ] {
        let design = solver.solve(&config, &target, Some(&phase1), variant)?;
        let l = design.limits();
        print!("{variant:>9}: c_l = {:.6}  c_u = {:.6}", l.lower_or_zero(), l.upper);
        match design.xi() {
            Some(xi) => println!("  xi = {xi:.6}"),
            None => println!(),
        }
    }
    Ok(())
}
