//! How the upper limit for P(L <= 1000) = 0.25 shrinks toward the known-variance value as m grows.

use sewma::design::{limit_vs_m_profile, solve_upper};
use sewma::{ChartConfig, DesignTarget, TwoSidedVariant};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.1, 5)?;
    let target = DesignTarget::quantile(1000, 0.25)?;
    let known = solve_upper(&config, &target, None)?.upper;

    let m_list = [15, 20, 30, 50, 100, 200, 400, 1200];
    let profile = limit_vs_m_profile(&config, &target, TwoSidedVariant::Symmetric, &m_list)?;
    println!("known variance: c_u = {known:.4}");
    for p in profile {
        println!("m = {:>4}: c_u = {:.4}  ratio {:.4}", p.m, p.limits.upper, p.limits.upper / known);
    }
    Ok(())
}
