//! Run-length distribution for a known in-control variance.
//!
//! The survival function obeys
//!
//! ```text
//! p_1(z0) = F_{χ²;n−1}( (n−1)/σ² · (c_u − (1−λ) z0) / λ )
//! p_l(z0) = ∫_{(1−λ) z0}^{c_u} p_{l−1}(z) δ(z0, z) dz,   l ≥ 2
//! ```
//!
//! Both approximation methods reduce this to a linear recursion `v_l = M v_{l−1}`
//! on a finite set of points ([`RunLengthModel`]). The recursion is run twice: once
//! on the survival values and once on the probability mass function, whose first
//! term is the exact one-step alarm probability. The second copy keeps the
//! geometric decay rate accurate when alarms are extremely rare.

mod collocation;
mod curve;
mod markov;

pub use collocation::CollocationBasis;
pub use curve::{GeometricTail, RlCurve};

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::chart::{ChartConfig, Limits};
use crate::error::{Error, Result};
use crate::numerics::ChiSquare;

/// Basis size used when none is given.
pub const DEFAULT_BASIS: usize = 50;

/// Steps allowed while waiting for the geometric tail when a full-distribution
/// quantity (ARL, far quantiles) is requested.
pub const TAIL_SEARCH_CAP: u64 = 200_000;

const TAIL_MIN_L: u64 = 20;
const TAIL_WINDOW: usize = 5;
const RATIO_TOL: f64 = 1e-10;
const EXIT_REL_TOL: f64 = 1e-9;
const NEGLIGIBLE: f64 = 1e-280;
/// Steps the survival ratio may stay settled while the exit estimates still
/// scatter; after that the scattered estimates are averaged.
const TAIL_STALL: u32 = 200;
/// Collocation exit rates below this are dominated by interpolation error of
/// the steep one-step alarm probability.
const RESOLVE_FLOOR: f64 = 1e-15;
/// Markov-chain size used to recover unresolved collocation tails.
const RESCUE_STATES: usize = 1000;
/// Smallest `1 − ratio` trusted when the rate must come from survival ratios:
/// below it the difference is mostly rounding error.
const RATIO_EXIT_FLOOR: f64 = 1e-8;
/// Steps past the tail start below which an unresolved rate moves the survival
/// function by less than `RESCUE_HORIZON · RESOLVE_FLOOR`, so no rescue is needed.
const RESCUE_HORIZON: u64 = 100_000;

/// Numerical method for the conditional recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Chebyshev collocation with `basis` polynomials per piece.
    Collocation { basis: usize },
    /// Markov chain with `states` transient states.
    MarkovChain { states: usize },
}

impl Default for Method {
    fn default() -> Self {
        Method::Collocation {
            basis: DEFAULT_BASIS,
        }
    }
}

impl Method {
    /// Matrix dimension per piece (basis size or number of states).
    pub fn size(&self) -> usize {
        match *self {
            Method::Collocation { basis } => basis,
            Method::MarkovChain { states } => states,
        }
    }
}

/// One-step transition density of the EWMA from `z0` to `z`.
///
/// `δ(z0, z) = (1/λ) f_{χ²;n−1}( (n−1)/σ² · (z − (1−λ) z0)/λ ) · (n−1)/σ²`, zero
/// below `(1−λ) z0`.
pub fn transition_density(z0: f64, z: f64, config: &ChartConfig, sigma2: f64) -> Result<f64> {
    config.validate()?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!(
            "variance must be positive, got {sigma2}"
        )));
    }
    let lambda = config.lambda;
    let df = config.df() as f64;
    let x = df / sigma2 * (z - (1.0 - lambda) * z0) / lambda;
    if x < 0.0 {
        return Ok(0.0);
    }
    Ok(ChiSquare::new(df)?.pdf(x) * df / (sigma2 * lambda))
}

/// Linear survival recursion on a finite grid, started from the head start.
///
/// `p_l(z0) = start · v_{l−1}` with `v_0 = 1`, `v_l = M v_{l−1}`; the mass
/// function uses the same matrix with `u_1` the exact one-step alarm probabilities.
#[derive(Debug, Clone)]
pub struct RunLengthModel {
    pub(crate) dim: usize,
    pub(crate) transition: Vec<f64>,
    pub(crate) start: Vec<f64>,
    pub(crate) p1_nodes: Vec<f64>,
    pub(crate) q1_nodes: Vec<f64>,
    pub(crate) p1_start: f64,
    pub(crate) q1_start: f64,
    pub(crate) rescue: Option<Rescue>,
}

/// Inputs for recomputing a tail rate too small for collocation.
///
/// The Markov-chain matrix is nonnegative, so its mass-function recursion keeps
/// full relative precision however small the alarm probabilities get.
#[derive(Debug, Clone)]
pub(crate) struct Rescue {
    config: ChartConfig,
    sigma2: f64,
    limits: Limits,
    exit: OnceLock<Option<f64>>,
}

impl Rescue {
    fn exit(&self) -> Option<f64> {
        *self.exit.get_or_init(|| {
            let model = markov::markov_model(&self.config, self.sigma2, &self.limits, RESCUE_STATES)
                .ok()?;
            model
                .curve(TAIL_SEARCH_CAP)
                .tail()
                .map(|t| t.exit)
                .filter(|&e| e > 0.0)
        })
    }
}

impl RunLengthModel {
    pub fn build(
        config: &ChartConfig,
        sigma2: f64,
        limits: &Limits,
        method: Method,
    ) -> Result<Self> {
        match method {
            Method::Collocation { basis } => {
                let mut model =
                    CollocationBasis::build(config, sigma2, limits, basis)?.into_model(config.z0);
                model.rescue = Some(Rescue {
                    config: *config,
                    sigma2,
                    limits: *limits,
                    exit: OnceLock::new(),
                });
                Ok(model)
            }
            Method::MarkovChain { states } => markov::markov_model(config, sigma2, limits, states),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Survival curve up to `l_max`, stopping early once the geometric tail is reached.
    ///
    /// Tail rates too small for collocation are recomputed only when `l_max`
    /// lies far enough beyond the tail start for the rate to matter; use
    /// [`full_curve`](Self::full_curve) before extrapolating far past `l_max`.
    pub fn curve(&self, l_max: u64) -> RlCurve {
        let l_max = l_max.max(1);
        if !(self.p1_start > 0.0) {
            return RlCurve::absorbed(l_max);
        }
        // `values` is the running minimum of the recursion output `raw`: the
        // approximation can tick upward by its own error where the true curve is
        // nearly flat, and clipping never moves a value further from a
        // nonincreasing truth than the largest error so far
        let mut raw = vec![self.p1_start];
        let mut values = raw.clone();
        let mut pmf = vec![self.q1_start];
        let mut v = self.p1_nodes.clone();
        let mut u = self.q1_nodes.clone();
        let mut v_next = vec![0.0; self.dim];
        let mut u_next = vec![0.0; self.dim];
        let mut tail = None;
        let mut settled = 0;
        let mut l = 1;
        while l < l_max {
            l += 1;
            let p = dot(&self.start, &v);
            let q = dot(&self.start, &u);
            raw.push(p.max(0.0));
            values.push(p.max(0.0).min(values[values.len() - 1]));
            pmf.push(q);
            if p <= NEGLIGIBLE {
                tail = Some(GeometricTail {
                    start: l,
                    ratio: 0.0,
                    exit: 1.0,
                });
                break;
            }
            if l >= TAIL_MIN_L {
                match detect_tail(&raw, &pmf, settled >= TAIL_STALL) {
                    TailState::Found(t) => {
                        tail = Some(t);
                        break;
                    }
                    TailState::Settled => settled += 1,
                    TailState::Pending => settled = 0,
                }
            }
            if l < l_max {
                self.step(&v, &mut v_next);
                self.step(&u, &mut u_next);
                std::mem::swap(&mut v, &mut v_next);
                std::mem::swap(&mut u, &mut u_next);
            }
        }
        if let (Some(t), Some(rescue)) = (tail.as_mut(), &self.rescue) {
            if t.exit < RESOLVE_FLOOR && l_max - t.start > RESCUE_HORIZON {
                if let Some(exit) = rescue.exit() {
                    t.exit = exit;
                    t.ratio = 1.0 - exit;
                }
            }
        }
        RlCurve {
            values,
            l_max,
            tail,
        }
    }

    /// Curve long enough to expose the geometric tail.
    pub fn full_curve(&self) -> Result<RlCurve> {
        let curve = self.curve(TAIL_SEARCH_CAP);
        if curve.converged() {
            Ok(curve)
        } else {
            Err(Error::NoConvergence(format!(
                "survival ratios did not settle within {TAIL_SEARCH_CAP} steps"
            )))
        }
    }

    pub fn arl(&self) -> Result<f64> {
        self.full_curve()?.arl()
    }

    fn step(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.transition.chunks_exact(self.dim)) {
            *o = dot(row, x);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

enum TailState {
    Found(GeometricTail),
    /// Ratios agree but the exit estimates do not yet.
    Settled,
    Pending,
}

/// Geometric regime: the last few survival ratios agree and so do the
/// alarm probabilities per step, `q_{k+1} / p_k`.
fn detect_tail(values: &[f64], pmf: &[f64], stalled: bool) -> TailState {
    let l = values.len();
    if l < TAIL_WINDOW + 1 {
        return TailState::Pending;
    }
    let ks = l - 1 - TAIL_WINDOW..l - 1;
    let ratios: Vec<f64> = ks.clone().map(|k| values[k + 1] / values[k]).collect();
    let (rmin, rmax) = min_max(&ratios);
    if !(rmax - rmin < RATIO_TOL) {
        return TailState::Pending;
    }
    let exits: Vec<f64> = ks.map(|k| pmf[k + 1] / values[k]).collect();
    let (emin, emax) = min_max(&exits);
    let found = |exit: f64| {
        TailState::Found(GeometricTail {
            start: l as u64,
            ratio: 1.0 - exit,
            exit,
        })
    };
    if emin > 0.0 && emax - emin <= EXIT_REL_TOL * emax {
        return found(exits[TAIL_WINDOW - 1]);
    }
    if emin > 0.0 && stalled {
        return found(exits.iter().sum::<f64>() / TAIL_WINDOW as f64);
    }
    // mass function lost to rounding: fall back on the survival ratio
    if !(emin > 0.0) && 1.0 - rmax > RATIO_EXIT_FLOOR {
        let ratio = ratios[TAIL_WINDOW - 1];
        return TailState::Found(GeometricTail {
            start: l as u64,
            ratio,
            exit: 1.0 - ratio,
        });
    }
    if stalled {
        // the approximation cannot resolve a decay this slow
        return TailState::Found(GeometricTail {
            start: l as u64,
            ratio: ratios[TAIL_WINDOW - 1],
            exit: 0.0,
        });
    }
    TailState::Settled
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
        (a.min(x), b.max(x))
    })
}

/// Survival curve by Chebyshev collocation with `basis` polynomials per piece.
pub fn sf_conditional(
    config: &ChartConfig,
    sigma2: f64,
    limits: &Limits,
    l_max: u64,
    basis: usize,
) -> Result<RlCurve> {
    if basis < 10 {
        return Err(Error::domain(format!(
            "collocation basis must have at least 10 polynomials, got {basis}"
        )));
    }
    Ok(RunLengthModel::build(config, sigma2, limits, Method::Collocation { basis })?.curve(l_max))
}

/// Survival curve by the Markov-chain approximation with `states` transient states.
pub fn sf_markov_chain(
    config: &ChartConfig,
    sigma2: f64,
    limits: &Limits,
    l_max: u64,
    states: usize,
) -> Result<RlCurve> {
    if states < 10 {
        return Err(Error::domain(format!(
            "Markov chain needs at least 10 states, got {states}"
        )));
    }
    Ok(RunLengthModel::build(config, sigma2, limits, Method::MarkovChain { states })?.curve(l_max))
}

/// Average run length `Σ_{l≥0} p_l`.
pub fn arl_conditional(config: &ChartConfig, sigma2: f64, limits: &Limits, basis: usize) -> Result<f64> {
    RunLengthModel::build(config, sigma2, limits, Method::Collocation { basis })?.arl()
}

/// Smallest `l` with `P(L ≤ l) ≥ alpha`, default collocation basis.
pub fn rl_quantile_conditional(
    config: &ChartConfig,
    sigma2: f64,
    limits: &Limits,
    alpha: f64,
) -> Result<u64> {
    let curve = RunLengthModel::build(config, sigma2, limits, Method::default())?.full_curve()?;
    let q = curve.quantile(alpha)?;
    if q > u64::MAX as f64 {
        return Err(Error::Saturated {
            alpha,
            cap: u64::MAX,
        });
    }
    Ok(q as u64)
}
