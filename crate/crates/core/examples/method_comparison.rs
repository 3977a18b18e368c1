//! Collocation against the Markov-chain approximation, with the phase I variance estimated.

use std::time::Instant;

use sewma::conditional::Method;
use sewma::unconditional::Settings;
use sewma::{ChartConfig, Limits, PhaseIConfig, UnconditionalRl};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.1, 5)?;
    let phase1 = PhaseIConfig::for_chart(50, &config)?;
    let limits = Limits::upper(1.719846);

    let methods = [
        Method::Collocation { basis: 20 },
        Method::Collocation { basis: 40 },
        Method::Collocation { basis: 50 },
        Method::MarkovChain { states: 100 },
        Method::MarkovChain { states: 500 },
    ];
    println!("{:<28} {:>12} {:>14} {:>9}", "method", "P(L<=1000)", "ARL", "seconds");
    for method in methods {
        let start = Instant::now();
        let settings = Settings { method, ..Settings::default() };
        let chart = UnconditionalRl::with_settings(config, phase1, limits, settings)?;
        let cdf = chart.cdf(1.0, 1000)?;
        let arl = chart.arl(1.0)?;
        println!(
            "{:<28} {cdf:>12.8} {arl:>14.2} {:>9.2}",
            format!("{method:?}"),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
