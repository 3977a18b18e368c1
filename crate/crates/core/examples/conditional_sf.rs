//! Run-length distribution of an upper EWMA S² chart with known in-control variance.

use sewma::conditional::{rl_quantile_conditional, sf_conditional, DEFAULT_BASIS};
use sewma::{ChartConfig, Limits};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.1, 5)?;
    let limits = Limits::upper(1.4781);

    for sigma in [1.0, 1.25, 1.5] {
        let curve = sf_conditional(&config, sigma * sigma, &limits, 2000, DEFAULT_BASIS)?;
        let median = rl_quantile_conditional(&config, sigma * sigma, &limits, 0.5)?;
        println!(
            "sigma {sigma:4}: ARL {:8.2}  P(L > 100) {:.4}  median {median}  tail ratio {:.6}",
            curve.arl()?,
            curve.sf(100).unwrap_or(f64::NAN),
            curve.tail_ratio().unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
