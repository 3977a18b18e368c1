//! Monte Carlo oracle: phase I estimation followed by phase II monitoring.
//!
//! Each replication draws its own variance estimate (or uses the true one), then
//! runs the EWMA until the first alarm or `l_cap`. Replication `r` uses ChaCha8
//! stream `r` under the common seed, so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartConfig, Limits};
use crate::error::{Error, Result};
use crate::unconditional::PhaseIConfig;

/// Default truncation horizon.
pub const DEFAULT_L_CAP: u64 = 1_000_000;

/// How the in-control variance estimate is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhaseIMode {
    /// The true variance is used.
    Known,
    /// `χ²_K / K` drawn directly.
    ChiSquare(PhaseIConfig),
    /// `m` subgroups of `n` standard normals, pooled.
    RawNormals(PhaseIConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub config: ChartConfig,
    pub phase1: PhaseIMode,
    /// Phase II standard deviation in units of the true in-control one.
    pub sigma: f64,
    pub limits: Limits,
    pub replications: u64,
    pub l_cap: u64,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(config: ChartConfig, phase1: PhaseIMode, sigma: f64, limits: Limits) -> Self {
        Self {
            config,
            phase1,
            sigma,
            limits,
            replications: 100_000,
            l_cap: DEFAULT_L_CAP,
            seed: 1,
        }
    }

    pub fn replications(mut self, reps: u64) -> Self {
        self.replications = reps;
        self
    }

    pub fn l_cap(mut self, l_cap: u64) -> Self {
        self.l_cap = l_cap;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.limits.validate_for(&self.config)?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!(
                "standard deviation must be positive, got {}",
                self.sigma
            )));
        }
        if self.replications == 0 || self.l_cap == 0 {
            return Err(Error::domain("replications and l_cap must be positive"));
        }
        if let PhaseIMode::ChiSquare(p) | PhaseIMode::RawNormals(p) = self.phase1 {
            if p.df_total != p.m * self.config.df() as u64 {
                return Err(Error::domain(format!(
                    "phase I degrees of freedom {} do not match m (n - 1) = {}",
                    p.df_total,
                    p.m * self.config.df() as u64
                )));
            }
        }
        Ok(())
    }
}

/// Simulated run lengths; runs still going at `l_cap` are censored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalRL {
    /// Observed run lengths, ascending.
    pub run_lengths: Vec<u64>,
    pub censored_count: u64,
    pub replications: u64,
    pub l_cap: u64,
}

/// Proportion with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `(reference − value) / se`; infinite when the estimate has no spread and differs.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = reference - self.value;
        if self.se > 0.0 {
            d / self.se
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

fn proportion(hits: u64, n: u64) -> Estimate {
    let p = hits as f64 / n as f64;
    Estimate {
        value: p,
        se: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

impl EmpiricalRL {
    fn from_runs(runs: Vec<Option<u64>>, l_cap: u64) -> Self {
        let replications = runs.len() as u64;
        let mut run_lengths: Vec<u64> = runs.iter().flatten().copied().collect();
        run_lengths.sort_unstable();
        let censored_count = replications - run_lengths.len() as u64;
        Self {
            run_lengths,
            censored_count,
            replications,
            l_cap,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored_count as f64 / self.replications as f64
    }

    fn count_at_most(&self, l: u64) -> u64 {
        self.run_lengths.partition_point(|&x| x <= l) as u64
    }

    /// `P(L > l)`; `None` at or beyond the horizon when runs were censored.
    pub fn sf(&self, l: u64) -> Option<Estimate> {
        if l >= self.l_cap && self.censored_count > 0 {
            return None;
        }
        Some(proportion(
            self.replications - self.count_at_most(l),
            self.replications,
        ))
    }

    pub fn cdf(&self, l: u64) -> Option<Estimate> {
        self.sf(l).map(|e| Estimate {
            value: 1.0 - e.value,
            se: e.se,
        })
    }

    /// Survival estimates for `l = 1..=l_max`.
    pub fn sf_curve(&self, l_max: u64) -> Vec<Option<Estimate>> {
        (1..=l_max).map(|l| self.sf(l)).collect()
    }

    /// Sample mean with its standard error; `None` when any run was censored,
    /// because the mean of the truncated runs would understate the ARL.
    pub fn arl(&self) -> Option<Estimate> {
        if self.censored_count > 0 {
            return None;
        }
        Some(self.truncated_mean())
    }

    /// Mean of `min(L, l_cap)`, a lower bound on the ARL.
    pub fn truncated_mean(&self) -> Estimate {
        let n = self.replications as f64;
        let cap = self.l_cap as f64;
        let (mut s, mut s2) = (0.0, 0.0);
        for &x in &self.run_lengths {
            let x = x as f64;
            s += x;
            s2 += x * x;
        }
        let c = self.censored_count as f64;
        s += c * cap;
        s2 += c * cap * cap;
        let mean = s / n;
        let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
        Estimate {
            value: mean,
            se: (var / n).sqrt(),
        }
    }
}

fn phase1_gamma(p: &PhaseIConfig) -> Result<Gamma<f64>> {
    Gamma::new(0.5 * p.df_total as f64, 2.0).map_err(|e| Error::domain(e.to_string()))
}

/// One draw of the standardized pooled estimate `σ̂₀² / σ₀²`.
pub fn simulate_phase1_estimate<R: Rng + ?Sized>(
    config: &ChartConfig,
    mode: &PhaseIMode,
    rng: &mut R,
) -> Result<f64> {
    match mode {
        PhaseIMode::Known => Ok(1.0),
        PhaseIMode::ChiSquare(p) => Ok(phase1_gamma(p)?.sample(rng) / p.df_total as f64),
        PhaseIMode::RawNormals(p) => {
            let n = config.n as usize;
            let mut pooled = 0.0;
            let mut xs = vec![0.0; n];
            for _ in 0..p.m {
                for x in xs.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                let mean = xs.iter().sum::<f64>() / n as f64;
                pooled += xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            }
            Ok(pooled / p.df_total as f64)
        }
    }
}

/// First alarm of the EWMA with subgroup variances `σ²_eff · χ²_{n−1}/(n−1)`;
/// `None` if no alarm by `l_cap`.
pub fn simulate_run_length<R: Rng + ?Sized>(
    config: &ChartConfig,
    sigma2_effective: f64,
    limits: &Limits,
    l_cap: u64,
    rng: &mut R,
) -> Result<Option<u64>> {
    let df = config.df() as f64;
    let gamma = Gamma::new(0.5 * df, 2.0 * sigma2_effective / df)
        .map_err(|e| Error::domain(e.to_string()))?;
    let lambda = config.lambda;
    let lower = limits.lower.unwrap_or(f64::NEG_INFINITY);
    let upper = limits.upper;
    let mut z = config.z0;
    for i in 1..=l_cap {
        z = (1.0 - lambda) * z + lambda * gamma.sample(rng);
        if z > upper || z < lower {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Generator for replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Run all replications of `spec`.
pub fn estimate_unconditional(spec: &SimulationSpec) -> Result<EmpiricalRL> {
    spec.validate()?;
    let sigma2 = spec.sigma * spec.sigma;
    let runs: Vec<Option<u64>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(spec.seed, rep);
            let s2 = simulate_phase1_estimate(&spec.config, &spec.phase1, &mut rng)?;
            simulate_run_length(&spec.config, sigma2 / s2, &spec.limits, spec.l_cap, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(EmpiricalRL::from_runs(runs, spec.l_cap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        let p = PhaseIConfig::new(20, 5).unwrap();
        let spec = SimulationSpec::new(cfg, PhaseIMode::ChiSquare(p), 1.0, Limits::upper(1.4781))
            .replications(300)
            .l_cap(5000)
            .seed(7);
        let a = estimate_unconditional(&spec).unwrap();
        let b = estimate_unconditional(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.run_lengths.len() as u64 + a.censored_count, 300);
    }

    #[test]
    fn censoring_hides_the_mean() {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        let spec = SimulationSpec::new(cfg, PhaseIMode::Known, 1.0, Limits::upper(1.4781))
            .replications(200)
            .l_cap(10);
        let e = estimate_unconditional(&spec).unwrap();
        assert!(e.censored_count > 0);
        assert!(e.arl().is_none());
        assert!(e.sf(10).is_none());
        assert!(e.sf(9).is_some());
        assert!(e.truncated_mean().value <= 10.0);
    }

    #[test]
    fn instant_alarm() {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        let mut rng = replication_rng(3, 0);
        let l = simulate_run_length(&cfg, 1.0, &Limits::upper(0.85), 100, &mut rng).unwrap();
        assert_eq!(l, Some(1));
    }

    #[test]
    fn z_score_edge_cases() {
        let e = Estimate { value: 0.5, se: 0.0 };
        assert_eq!(e.z_score(0.5), 0.0);
        assert!(e.z_score(0.6).is_infinite());
    }
}
