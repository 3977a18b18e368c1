//! Run-length behaviour once the in-control variance is estimated from m phase I subgroups.
//!
//! Mirrors the reference R session: λ = 0.2, n = 5, m = 50 and c_u = 2.1538.

use sewma::{ChartConfig, Limits, PhaseIConfig, UnconditionalRl};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.2, 5)?;
    let phase1 = PhaseIConfig::for_chart(50, &config)?;
    let chart = UnconditionalRl::new(config, phase1, Limits::upper(2.1538))?;

    for l in [10, 100, 1000, 10_000] {
        println!("P(L <= {l:>5}) = {:.4}", chart.cdf(1.0, l)?);
    }
    println!("in-control median run length: {}", chart.quantile(1.0, 0.5)?);
    for sigma in [1.0, 1.2, 1.5] {
        println!("E_{sigma}(L) = {:.2}", chart.arl(sigma)?);
    }
    Ok(())
}
