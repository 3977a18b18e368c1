//! Numerical run-length probabilities checked against simulation.

use sewma::simulate::estimate_unconditional;
use sewma::{ChartConfig, Limits, PhaseIConfig, PhaseIMode, SimulationSpec, UnconditionalRl};

fn main() -> sewma::Result<()> {
    let config = ChartConfig::upper(0.1, 5)?;
    let phase1 = PhaseIConfig::for_chart(50, &config)?;
    let limits = Limits::upper(1.719846);
    let numeric = UnconditionalRl::new(config, phase1, limits)?;

    for mode in [PhaseIMode::ChiSquare(phase1), PhaseIMode::RawNormals(phase1)] {
        let spec = SimulationSpec::new(config, mode, 1.0, limits)
            .replications(20_000)
            .l_cap(1000)
            .seed(2024);
        let mc = estimate_unconditional(&spec)?;
        let exact = numeric.cdf(1.0, 999)?;
        let est = mc.cdf(999).expect("below the horizon");
        println!(
            "{:<11} P(L<=999): numeric {exact:.4}, simulated {:.4} ± {:.4}, z = {:+.2}",
            match mode {
                PhaseIMode::ChiSquare(_) => "chi-square",
                _ => "raw normal",
            },
            est.value,
            est.se,
            est.z_score(exact)
        );
    }
    Ok(())
}
