//! Markov-chain discretization of the continuation region (comparator method).

use crate::chart::{ChartConfig, Limits};
use crate::error::{Error, Result};

use super::collocation::{exit_probability, TransitionIntegrator};
use super::RunLengthModel;

/// Equal-width cells over the continuation region, each represented by its midpoint.
pub(crate) fn markov_model(
    config: &ChartConfig,
    sigma2: f64,
    limits: &Limits,
    states: usize,
) -> Result<RunLengthModel> {
    config.validate()?;
    limits.validate_for(config)?;
    if states < 2 {
        return Err(Error::domain(format!(
            "Markov chain needs at least 2 states, got {states}"
        )));
    }
    let integ = TransitionIntegrator::new(config, sigma2, 1)?;
    let lo = limits.lower_or_zero();
    let hi = limits.upper;
    let width = (hi - lo) / states as f64;
    let edges: Vec<f64> = (0..=states).map(|j| lo + j as f64 * width).collect();
    let mids: Vec<f64> = (0..states).map(|j| lo + (j as f64 + 0.5) * width).collect();

    let row_for = |z0: f64| -> Vec<f64> {
        (0..states)
            .map(|j| integ.mass(z0, edges[j], edges[j + 1]))
            .collect()
    };
    let mut transition = Vec::with_capacity(states * states);
    for &z in &mids {
        transition.extend(row_for(z));
    }
    let start = row_for(config.z0);
    let p1_nodes = mids.iter().map(|&z| integ.mass(z, lo, hi)).collect();
    let q1_nodes = mids
        .iter()
        .map(|&z| exit_probability(&integ, limits, z))
        .collect();
    Ok(RunLengthModel {
        dim: states,
        transition,
        start,
        p1_nodes,
        q1_nodes,
        p1_start: integ.mass(config.z0, lo, hi),
        q1_start: exit_probability(&integ, limits, config.z0),
        rescue: None,
    })
}
