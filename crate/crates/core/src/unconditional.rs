//! Run-length distribution averaged over the phase I variance estimate.
//!
//! The pooled phase I variance satisfies `σ̂₀² ~ σ₀² χ²_K / K` with
//! `K = m (n − 1)`. Standardizing by it turns a phase II variance `σ²` into
//! `σ² / s²` for a realized estimate `s²`, so
//!
//! ```text
//! p_{l,unc} = ∫ f_{σ̂₀²}(s²) p_l(z0; σ² / s²) ds²
//! ```
//!
//! The integral runs over Gauss–Legendre nodes between the `1e−10` and
//! `1 − 1e−10` quantiles of `χ²_K / K`. Each node carries its own conditional
//! recursion with its own geometric tail; the mixture itself is not geometric.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartConfig, Limits, Sided};
use crate::conditional::{Method, RlCurve, RunLengthModel, TAIL_SEARCH_CAP};
use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, ChiSquare};

/// Number of mixing nodes used when none is given.
pub const DEFAULT_MIXING_NODES: usize = 60;

/// Tail mass cut from each end of the phase I distribution.
pub const MIXING_TAIL: f64 = 1e-10;

/// Largest run length considered by the unconditional quantile search.
pub const QUANTILE_CAP: u64 = 10_000_000;

/// Phase I sample: `m` subgroups, pooled estimator with `df_total = m (n − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseIConfig {
    pub m: u64,
    pub df_total: u64,
}

impl PhaseIConfig {
    pub fn new(m: u64, n: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("phase I needs at least one subgroup"));
        }
        if n < 2 {
            return Err(Error::domain(format!(
                "subgroup size must be at least 2, got {n}"
            )));
        }
        Ok(Self {
            m,
            df_total: m * (n as u64 - 1),
        })
    }

    /// Phase I sample for the subgroup size of `config`.
    pub fn for_chart(m: u64, config: &ChartConfig) -> Result<Self> {
        Self::new(m, config.n)
    }
}

/// Quadrature over the distribution of the standardized estimate `σ̂₀² / σ₀²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingRule {
    pub s2_nodes: Vec<f64>,
    /// Quadrature weight times the density of `χ²_K / K` at the node.
    pub s2_weights: Vec<f64>,
    pub lower_cut: f64,
    pub upper_cut: f64,
}

impl MixingRule {
    pub fn len(&self) -> usize {
        self.s2_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s2_nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.s2_weights.iter().sum()
    }
}

/// Gauss–Legendre rule on `[q(1e−10), q(1 − 1e−10)]` of `χ²_K / K`.
pub fn build_mixing_rule(phase1: &PhaseIConfig, n_nodes: usize) -> Result<MixingRule> {
    if n_nodes < 2 {
        return Err(Error::domain(format!(
            "mixing rule needs at least 2 nodes, got {n_nodes}"
        )));
    }
    let k = phase1.df_total as f64;
    let chi = ChiSquare::new(k)?;
    let lower_cut = chi.quantile(MIXING_TAIL)? / k;
    let upper_cut = chi.quantile_upper(MIXING_TAIL)? / k;
    let rule = gauss_legendre(n_nodes, lower_cut, upper_cut)?;
    let s2_weights = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&s2, &w)| w * k * chi.pdf(k * s2))
        .collect();
    Ok(MixingRule {
        s2_nodes: rule.nodes,
        s2_weights,
        lower_cut,
        upper_cut,
    })
}

/// Numerical settings for mixed quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Settings {
    pub method: Method,
    pub mixing_nodes: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: Method::default(),
            mixing_nodes: DEFAULT_MIXING_NODES,
        }
    }
}

/// Unconditional ARL, or a lower bound on it when `exact` is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArlBound {
    pub value: f64,
    pub exact: bool,
}

/// Conditional curve at one mixing node.
#[derive(Debug, Clone)]
pub struct NodeCurve {
    pub s2: f64,
    pub weight: f64,
    pub curve: RlCurve,
}

type ModelSet = Arc<Vec<RunLengthModel>>;

/// Unconditional run-length quantities for one chart, phase I size and set of limits.
///
/// Conditional models are cached per phase II standard deviation, so repeated
/// queries (survival curve, ARL, quantiles) at the same `sigma` share the work.
#[derive(Debug)]
pub struct UnconditionalRl {
    config: ChartConfig,
    phase1: PhaseIConfig,
    limits: Limits,
    settings: Settings,
    rule: MixingRule,
    models: Mutex<HashMap<u64, ModelSet>>,
}

impl UnconditionalRl {
    pub fn new(config: ChartConfig, phase1: PhaseIConfig, limits: Limits) -> Result<Self> {
        Self::with_settings(config, phase1, limits, Settings::default())
    }

    pub fn with_settings(
        config: ChartConfig,
        phase1: PhaseIConfig,
        limits: Limits,
        settings: Settings,
    ) -> Result<Self> {
        config.validate()?;
        limits.validate_for(&config)?;
        let rule = build_mixing_rule(&phase1, settings.mixing_nodes)?;
        Ok(Self {
            config,
            phase1,
            limits,
            settings,
            rule,
            models: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ChartConfig {
        &self.config
    }

    pub fn phase1(&self) -> &PhaseIConfig {
        &self.phase1
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn mixing_rule(&self) -> &MixingRule {
        &self.rule
    }

    fn models(&self, sigma: f64) -> Result<ModelSet> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "standard deviation must be positive, got {sigma}"
            )));
        }
        let key = sigma.to_bits();
        if let Some(m) = self.models.lock().expect("model cache poisoned").get(&key) {
            return Ok(Arc::clone(m));
        }
        let sigma2 = sigma * sigma;
        let built: Vec<RunLengthModel> = self
            .rule
            .s2_nodes
            .par_iter()
            .map(|&s2| {
                RunLengthModel::build(&self.config, sigma2 / s2, &self.limits, self.settings.method)
            })
            .collect::<Result<_>>()?;
        let built = Arc::new(built);
        self.models
            .lock()
            .expect("model cache poisoned")
            .insert(key, Arc::clone(&built));
        Ok(built)
    }

    /// Conditional curves at every mixing node, each up to `l_max` or its geometric tail.
    pub fn node_curves(&self, sigma: f64, l_max: u64) -> Result<Vec<NodeCurve>> {
        let models = self.models(sigma)?;
        let curves: Vec<RlCurve> = models.par_iter().map(|m| m.curve(l_max)).collect();
        Ok(curves
            .into_iter()
            .zip(self.rule.s2_nodes.iter().zip(&self.rule.s2_weights))
            .map(|(curve, (&s2, &weight))| NodeCurve { s2, weight, curve })
            .collect())
    }

    fn full_node_curves(&self, sigma: f64) -> Result<Vec<NodeCurve>> {
        let models = self.models(sigma)?;
        let curves: Vec<RlCurve> = models
            .par_iter()
            .zip(&self.rule.s2_nodes)
            .map(|(m, &s2)| m.full_curve().map_err(|e| e.at_node(s2)))
            .collect::<Result<_>>()?;
        Ok(curves
            .into_iter()
            .zip(self.rule.s2_nodes.iter().zip(&self.rule.s2_weights))
            .map(|(curve, (&s2, &weight))| NodeCurve { s2, weight, curve })
            .collect())
    }

    /// Unconditional survival values `p_{1,unc}, …, p_{l_max,unc}`.
    pub fn sf(&self, sigma: f64, l_max: u64) -> Result<Vec<f64>> {
        let nodes = self.node_curves(sigma, l_max)?;
        let mut out = vec![0.0; l_max as usize];
        for node in &nodes {
            for (l, o) in out.iter_mut().enumerate() {
                *o += node.weight * node_sf(node, l as u64 + 1)?;
            }
        }
        Ok(out)
    }

    /// `P(L ≤ l)` at phase II standard deviation `sigma`.
    pub fn cdf(&self, sigma: f64, l: u64) -> Result<f64> {
        if l == 0 {
            return Ok(0.0);
        }
        let nodes = self.node_curves(sigma, l)?;
        Ok(1.0 - mix_sf(&nodes, l)?)
    }

    /// Unconditional ARL, mixing the conditional ARLs of the nodes.
    pub fn arl(&self, sigma: f64) -> Result<f64> {
        let nodes = self.full_node_curves(sigma)?;
        let mut total = 0.0;
        for node in &nodes {
            total += node.weight * node.curve.arl().map_err(|e| e.at_node(node.s2))?;
            if !total.is_finite() {
                return Err(Error::Divergence {
                    ratio: node.curve.tail_ratio().unwrap_or(1.0),
                    s2: Some(node.s2),
                });
            }
        }
        Ok(total)
    }

    /// Lower bound on the unconditional ARL that stays finite when some nodes diverge.
    ///
    /// A node whose geometric tail cannot be resolved contributes the partial
    /// sum `Σ_{l < k} p_l` over the steps actually computed. On an upper chart
    /// the run length is stochastically decreasing in the variance, so such a
    /// node contributes at least the largest ARL found at a smaller `s²` instead.
    pub fn arl_lower_bound(&self, sigma: f64) -> Result<ArlBound> {
        let models = self.models(sigma)?;
        let parts: Vec<(Option<f64>, f64)> = models
            .par_iter()
            .map(|m| {
                let curve = m.curve(TAIL_SEARCH_CAP);
                let partial = 1.0 + curve.computed().iter().sum::<f64>();
                (curve.arl().ok(), partial)
            })
            .collect();
        let monotone = self.config.sided == Sided::Upper;
        let mut value = 0.0;
        let mut running_max = 0.0_f64;
        for ((exact, partial), w) in parts.iter().zip(&self.rule.s2_weights) {
            let node = match exact {
                Some(a) => *a,
                None if monotone => partial.max(running_max),
                None => *partial,
            };
            running_max = running_max.max(node);
            value += w * node;
        }
        Ok(ArlBound {
            value,
            exact: parts.iter().all(|(a, _)| a.is_some()),
        })
    }

    /// Smallest `l` with unconditional `P(L ≤ l) ≥ alpha`.
    pub fn quantile(&self, sigma: f64, alpha: f64) -> Result<u64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0,1), got {alpha}"
            )));
        }
        let nodes = self.full_node_curves(sigma)?;
        let reached = |l: u64| -> Result<bool> { Ok(1.0 - mix_sf(&nodes, l)? >= alpha) };
        if !reached(QUANTILE_CAP)? {
            return Err(Error::Saturated {
                alpha,
                cap: QUANTILE_CAP,
            });
        }
        // CDF is nondecreasing: bisection on l
        let (mut lo, mut hi) = (0u64, QUANTILE_CAP);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if reached(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Weighted average of conditional RL quantiles over the phase I distribution.
    pub fn percentile_marginal(&self, sigma: f64, alpha: f64) -> Result<f64> {
        let nodes = self.full_node_curves(sigma)?;
        let mut total = 0.0;
        for node in &nodes {
            total += node.weight * node.curve.quantile(alpha).map_err(|e| e.at_node(node.s2))?;
        }
        Ok(total)
    }
}

fn node_sf(node: &NodeCurve, l: u64) -> Result<f64> {
    node.curve.sf(l).ok_or_else(|| {
        Error::NoConvergence(format!(
            "no survival value at l = {l} for node s2 = {}",
            node.s2
        ))
    })
}

fn mix_sf(nodes: &[NodeCurve], l: u64) -> Result<f64> {
    let mut total = 0.0;
    for node in nodes {
        total += node.weight * node_sf(node, l)?;
    }
    Ok(total)
}

/// Unconditional survival function `p_{1,unc}..p_{l_max,unc}` with default settings.
pub fn sf_unconditional(
    l_max: u64,
    config: &ChartConfig,
    phase1: &PhaseIConfig,
    sigma: f64,
    limits: &Limits,
) -> Result<Vec<f64>> {
    UnconditionalRl::new(*config, *phase1, *limits)?.sf(sigma, l_max)
}

/// Unconditional `P(L ≤ l)` with default settings.
pub fn cdf_unconditional(
    l: u64,
    config: &ChartConfig,
    phase1: &PhaseIConfig,
    sigma: f64,
    limits: &Limits,
) -> Result<f64> {
    UnconditionalRl::new(*config, *phase1, *limits)?.cdf(sigma, l)
}

/// Unconditional ARL with default settings.
pub fn arl_unconditional(
    config: &ChartConfig,
    phase1: &PhaseIConfig,
    sigma: f64,
    limits: &Limits,
) -> Result<f64> {
    UnconditionalRl::new(*config, *phase1, *limits)?.arl(sigma)
}

/// Unconditional RL quantile with default settings.
pub fn quantile_unconditional(
    alpha: f64,
    config: &ChartConfig,
    phase1: &PhaseIConfig,
    sigma: f64,
    limits: &Limits,
) -> Result<u64> {
    UnconditionalRl::new(*config, *phase1, *limits)?.quantile(sigma, alpha)
}

/// Phase-I-weighted average of conditional RL quantiles with default settings.
pub fn percentile_marginal(
    alpha: f64,
    config: &ChartConfig,
    phase1: &PhaseIConfig,
    sigma: f64,
    limits: &Limits,
) -> Result<f64> {
    UnconditionalRl::new(*config, *phase1, *limits)?.percentile_marginal(sigma, alpha)
}
