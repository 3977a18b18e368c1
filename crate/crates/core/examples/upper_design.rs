//! Upper control limits from an ARL target and from a run-length quantile target.

use sewma::design::solve_upper;
use sewma::{ChartConfig, DesignTarget, PhaseIConfig};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.1, 5)?;
    let arl_rule = DesignTarget::arl(500.0)?;
    let quantile_rule = DesignTarget::quantile(1000, 0.25)?;

    println!("ARL 500, known variance:     c_u = {:.6}", solve_upper(&config, &arl_rule, None)?.upper);
    println!("P(L<=1000)=0.25, known:      c_u = {:.6}", solve_upper(&config, &quantile_rule, None)?.upper);
    for m in [20, 50, 200] {
        let phase1 = PhaseIConfig::for_chart(m, &config)?;
        let limits = solve_upper(&config, &quantile_rule, Some(&phase1))?;
        println!("P(L<=1000)=0.25, m = {m:>3}:    c_u = {:.6}", limits.upper);
    }
    Ok(())
}
