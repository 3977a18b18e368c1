//! Limits designed for a known variance, used with an estimated one.
//!
//! Phase I estimates that come out too large push some run lengths past 10⁵
//! even though the in-control ARL was meant to be 500.

use sewma::{ChartConfig, Limits, PhaseIConfig, UnconditionalRl};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.1, 5)?;
    let limits = Limits::upper(1.4781);
    for m in [10, 30, 100] {
        let chart = UnconditionalRl::new(config, PhaseIConfig::for_chart(m, &config)?, limits)?;
        println!(
            "m = {m:>3}: P(L > 1e5) = {:.4}, P(L <= 100) = {:.4}",
            1.0 - chart.cdf(1.0, 100_000)?,
            chart.cdf(1.0, 100)?
        );
    }
    Ok(())
}
