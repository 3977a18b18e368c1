//! Control-limit design: limits that meet an in-control run-length target.
//!
//! Two kinds of target are supported:
//!
//! * quantile rule `P(L ≤ l̄) = α`, the horizon `l̄` becomes the α quantile of the
//!   in-control run length;
//! * ARL rule `E(L) = ARL₀`.
//!
//! Without a phase I sample the target is met for a known in-control variance.
//! With one, it is met by the unconditional run length, averaged over the
//! phase I estimate.
//!
//! Two-sided charts need a second condition. The symmetric design uses
//! `z0 ± c`. The unbiased design makes the in-control point the extremum of
//! the run-length profile over `σ`, i.e. `P_{1−ε} = P_{1+ε}` for the quantile
//! rule or `E_{1−ε} = E_{1+ε}` for the ARL rule. The quasi-unbiased design
//! widens the known-variance unbiased limits by one factor `ξ`.

use serde::{Deserialize, Serialize};

use crate::chart::{ChartConfig, Limits, Sided};
use crate::conditional::{Method, RunLengthModel};
use crate::error::{Error, Result};
use crate::roots::{solve_decreasing, Tolerance};
use crate::unconditional::{PhaseIConfig, Settings, UnconditionalRl};

/// In-control run-length target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DesignTarget {
    /// `P(L ≤ l_bar) = alpha`.
    Quantile { l_bar: u64, alpha: f64 },
    /// `E(L) = arl0`.
    Arl { arl0: f64 },
}

impl DesignTarget {
    pub fn quantile(l_bar: u64, alpha: f64) -> Result<Self> {
        let t = DesignTarget::Quantile { l_bar, alpha };
        t.validate()?;
        Ok(t)
    }

    pub fn arl(arl0: f64) -> Result<Self> {
        let t = DesignTarget::Arl { arl0 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DesignTarget::Quantile { l_bar, alpha } => {
                if l_bar == 0 {
                    return Err(Error::domain("horizon l_bar must be positive"));
                }
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::domain(format!(
                        "alpha must lie in (0,1), got {alpha}"
                    )));
                }
            }
            DesignTarget::Arl { arl0 } => {
                if !(arl0 > 1.0 && arl0.is_finite()) {
                    return Err(Error::domain(format!(
                        "target ARL must exceed 1, got {arl0}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Two-sided design flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoSidedVariant {
    Symmetric,
    Unbiased,
    QuasiUnbiased,
}

impl std::str::FromStr for TwoSidedVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" | "sym" => Ok(TwoSidedVariant::Symmetric),
            "unbiased" => Ok(TwoSidedVariant::Unbiased),
            "quasi" | "quasi-unbiased" | "quasi_unbiased" => Ok(TwoSidedVariant::QuasiUnbiased),
            other => Err(Error::domain(format!("unknown two-sided variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for TwoSidedVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TwoSidedVariant::Symmetric => "symmetric",
            TwoSidedVariant::Unbiased => "unbiased",
            TwoSidedVariant::QuasiUnbiased => "quasi",
        })
    }
}

/// Solved two-sided limits together with how they were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSidedDesign {
    pub variant: TwoSidedVariant,
    pub limits: Limits,
    /// Widening factor (quasi-unbiased only): `c_l = c_l^∞ / ξ`, `c_u = c_u^∞ · ξ`.
    pub xi: Option<f64>,
    /// Known-variance unbiased limits the quasi-unbiased design starts from.
    pub base_limits: Option<Limits>,
    /// Set when the unbiasedness condition could not be met with `c_l ≥ 0`
    /// and the lower limit sits at 0.
    pub at_boundary: bool,
}

/// One row of a limits-versus-phase-I-size profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub m: u64,
    pub limits: Limits,
    pub xi: Option<f64>,
}

/// Root-finding and evaluation settings for the design solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSolver {
    pub settings: Settings,
    /// Half width of the `σ` interval used for the unbiasedness condition.
    pub epsilon: f64,
    /// Residual tolerance (probability, or log ARL for the ARL rule).
    pub residual_tol: f64,
    /// Tolerance on the limits themselves.
    pub limit_tol: f64,
    pub max_iter: usize,
}

impl Default for DesignSolver {
    fn default() -> Self {
        Self {
            settings: Settings::default(),
            epsilon: 1e-3,
            residual_tol: 1e-9,
            limit_tol: 1e-9,
            max_iter: 100,
        }
    }
}

/// Upper bound on any limit, in units of `z0`.
const MAX_LIMIT: f64 = 50.0;
/// Stand-in for `ln E(L)` when the run length has no finite mean.
const LOG_ARL_CAP: f64 = 700.0;
const XI_MAX: f64 = 3.0;
/// ξ below 1 by more than this is reported as infeasible.
const XI_SLACK: f64 = 1e-4;

/// Evaluates run-length quantities for candidate limits.
struct Evaluator<'a> {
    config: ChartConfig,
    phase1: Option<&'a PhaseIConfig>,
    settings: Settings,
}

impl Evaluator<'_> {
    fn prob_within(&self, limits: &Limits, sigma: f64, l_bar: u64) -> Result<f64> {
        match self.phase1 {
            None => {
                let model =
                    RunLengthModel::build(&self.config, sigma * sigma, limits, self.settings.method)?;
                let curve = model.curve(l_bar);
                curve.cdf(l_bar).ok_or_else(|| {
                    Error::NoConvergence(format!("no survival value at l = {l_bar}"))
                })
            }
            Some(p) => UnconditionalRl::with_settings(self.config, *p, *limits, self.settings)?
                .cdf(sigma, l_bar),
        }
    }

    fn log_arl(&self, limits: &Limits, sigma: f64) -> Result<f64> {
        let arl = match self.phase1 {
            None => RunLengthModel::build(&self.config, sigma * sigma, limits, self.settings.method)?
                .arl(),
            Some(p) => {
                UnconditionalRl::with_settings(self.config, *p, *limits, self.settings)?.arl(sigma)
            }
        };
        match arl {
            Ok(a) => Ok(a.ln().min(LOG_ARL_CAP)),
            Err(Error::Divergence { .. }) => Ok(LOG_ARL_CAP),
            Err(e) => Err(e),
        }
    }

    /// Increasing in the run length: `−P_σ(L ≤ l̄)` or `ln E_σ(L)`.
    fn length_score(&self, target: &DesignTarget, limits: &Limits, sigma: f64) -> Result<f64> {
        match *target {
            DesignTarget::Quantile { l_bar, .. } => Ok(-self.prob_within(limits, sigma, l_bar)?),
            DesignTarget::Arl { .. } => self.log_arl(limits, sigma),
        }
    }

    /// In-control residual, decreasing as the limits widen.
    fn residual(&self, target: &DesignTarget, limits: &Limits) -> Result<f64> {
        match *target {
            DesignTarget::Quantile { l_bar, alpha } => {
                Ok(self.prob_within(limits, 1.0, l_bar)? - alpha)
            }
            DesignTarget::Arl { arl0 } => Ok(arl0.ln() - self.log_arl(limits, 1.0)?),
        }
    }
}

impl DesignSolver {
    /// Same solver with a different conditional method.
    pub fn with_method(mut self, method: Method) -> Self {
        self.settings.method = method;
        self
    }

    fn tolerance(&self) -> Tolerance {
        Tolerance {
            x: self.limit_tol,
            f: self.residual_tol,
            max_iter: self.max_iter,
        }
    }

    fn evaluator<'a>(&self, config: &ChartConfig, phase1: Option<&'a PhaseIConfig>) -> Evaluator<'a> {
        Evaluator {
            config: *config,
            phase1,
            settings: self.settings,
        }
    }

    /// Upper limit `c_u` of an upper chart.
    pub fn upper(
        &self,
        config: &ChartConfig,
        target: &DesignTarget,
        phase1: Option<&PhaseIConfig>,
    ) -> Result<Limits> {
        check_side(config, Sided::Upper)?;
        target.validate()?;
        let (start, step) = match phase1 {
            None => {
                let sd = ewma_sd(config);
                (config.z0 + 3.0 * sd, 0.5 * sd)
            }
            Some(_) => {
                let known = self.upper(config, target, None)?.upper;
                (1.02 * known, 0.02 * known)
            }
        };
        let eval = self.evaluator(config, phase1);
        let lo = (1.0 - config.lambda) * config.z0;
        let c_u = solve_decreasing(
            |c| eval.residual(target, &Limits::upper(c)),
            start,
            step,
            lo,
            MAX_LIMIT * config.z0,
            self.tolerance(),
        )?;
        Ok(Limits::upper(c_u))
    }

    /// Two-sided limits `(z0 − c, z0 + c)`, lower limit floored at 0.
    pub fn symmetric(
        &self,
        config: &ChartConfig,
        target: &DesignTarget,
        phase1: Option<&PhaseIConfig>,
    ) -> Result<Limits> {
        check_side(config, Sided::TwoSided)?;
        target.validate()?;
        let z0 = config.z0;
        let (start, step) = match phase1 {
            None => {
                let sd = ewma_sd(config);
                (3.0 * sd, 0.5 * sd)
            }
            Some(_) => {
                let known = self.symmetric(config, target, None)?.upper - z0;
                (1.02 * known, 0.02 * known)
            }
        };
        let eval = self.evaluator(config, phase1);
        let c = solve_decreasing(
            |c| eval.residual(target, &symmetric_limits(z0, c)),
            start,
            step,
            0.0,
            MAX_LIMIT * z0,
            self.tolerance(),
        )?;
        Ok(symmetric_limits(z0, c))
    }

    /// `c_u` meeting the in-control target for a fixed lower limit.
    fn upper_for_lower(
        &self,
        eval: &Evaluator<'_>,
        target: &DesignTarget,
        c_l: f64,
        guess: f64,
    ) -> Result<f64> {
        let z0 = eval.config.z0;
        let guess = guess.max(z0 * (1.0 + 1e-3));
        solve_decreasing(
            |c| eval.residual(target, &Limits::two_sided(c_l, c)),
            guess,
            0.01 * (guess - z0).max(1e-3 * z0),
            z0,
            MAX_LIMIT * z0,
            self.tolerance(),
        )
    }

    /// Two-sided limits meeting the target and making the in-control point the
    /// extremum of the run-length profile over `σ`.
    pub fn unbiased(
        &self,
        config: &ChartConfig,
        target: &DesignTarget,
        phase1: Option<&PhaseIConfig>,
    ) -> Result<TwoSidedDesign> {
        check_side(config, Sided::TwoSided)?;
        target.validate()?;
        let z0 = config.z0;
        let start = match phase1 {
            None => self.symmetric(config, target, None)?,
            Some(_) => {
                let known = self.unbiased(config, target, None)?.limits;
                Limits::two_sided(known.lower_or_zero() / 1.02, known.upper * 1.02)
            }
        };
        let eval = self.evaluator(config, phase1);
        let eps = self.epsilon;
        let mut c_u_guess = start.upper;
        let mut inner = |c_l: f64| -> Result<Option<f64>> {
            match self.upper_for_lower(&eval, target, c_l, c_u_guess) {
                Ok(c_u) => {
                    c_u_guess = c_u;
                    Ok(Some(c_u))
                }
                // lower limit alone already exceeds the target; the residual
                // then plateaus and only numerical noise remains
                Err(Error::Infeasible(_) | Error::NonMonotone(_)) => Ok(None),
                Err(e) => Err(e),
            }
        };
        // decreasing in c_l: a tighter lower limit shortens runs below σ = 1
        let mut asymmetry = |c_l: f64| -> Result<f64> {
            let Some(c_u) = inner(c_l)? else {
                return Ok(-1.0);
            };
            let limits = Limits::two_sided(c_l, c_u);
            let below = eval.length_score(target, &limits, 1.0 - eps)?;
            let above = eval.length_score(target, &limits, 1.0 + eps)?;
            Ok(below - above)
        };

        let at_zero = asymmetry(0.0)?;
        if at_zero <= 0.0 {
            let c_u = self.upper_for_lower(&eval, target, 0.0, start.upper)?;
            return Ok(TwoSidedDesign {
                variant: TwoSidedVariant::Unbiased,
                limits: Limits::two_sided(0.0, c_u),
                xi: None,
                base_limits: None,
                at_boundary: true,
            });
        }
        let c_l0 = start.lower_or_zero().clamp(0.05 * z0, 0.95 * z0);
        let c_l = solve_decreasing(
            &mut asymmetry,
            c_l0,
            0.02 * z0,
            0.0,
            z0 * (1.0 - 1e-9),
            self.tolerance(),
        )?;
        let c_u = self.upper_for_lower(&eval, target, c_l, c_u_guess)?;
        Ok(TwoSidedDesign {
            variant: TwoSidedVariant::Unbiased,
            limits: Limits::two_sided(c_l, c_u),
            xi: None,
            base_limits: None,
            at_boundary: false,
        })
    }

    /// Known-variance unbiased limits widened by one factor `ξ` until the
    /// unconditional target is met.
    pub fn quasi_unbiased(
        &self,
        config: &ChartConfig,
        target: &DesignTarget,
        phase1: &PhaseIConfig,
    ) -> Result<TwoSidedDesign> {
        check_side(config, Sided::TwoSided)?;
        target.validate()?;
        let base = self.unbiased(config, target, None)?.limits;
        let (bl, bu) = (base.lower_or_zero(), base.upper);
        let eval = self.evaluator(config, Some(phase1));
        let widen = |xi: f64| Limits::two_sided(bl / xi, bu * xi);
        let lo = 0.9_f64.max(config.z0 / bu).max(bl / config.z0);
        let xi = solve_decreasing(
            |xi| eval.residual(target, &widen(xi)),
            1.0,
            0.02,
            lo,
            XI_MAX,
            self.tolerance(),
        )
        .map_err(|e| match e {
            Error::Infeasible(m) => {
                Error::Infeasible(format!("no correction factor in (1, {XI_MAX}]: {m}"))
            }
            other => other,
        })?;
        if xi < 1.0 - XI_SLACK {
            return Err(Error::Infeasible(format!(
                "known-variance limits already meet the target (correction {xi:.6} < 1)"
            )));
        }
        let xi = xi.max(1.0);
        Ok(TwoSidedDesign {
            variant: TwoSidedVariant::QuasiUnbiased,
            limits: widen(xi),
            xi: Some(xi),
            base_limits: Some(base),
            at_boundary: false,
        })
    }

    /// Known-variance ARL-unbiased limits: `E_1(L) = arl0` with the ARL maximal at `σ = 1`.
    pub fn arl_unbiased(&self, config: &ChartConfig, arl0: f64) -> Result<TwoSidedDesign> {
        self.unbiased(config, &DesignTarget::arl(arl0)?, None)
    }

    /// Limits for `config` under `variant` (ignored for upper charts).
    pub fn solve(
        &self,
        config: &ChartConfig,
        target: &DesignTarget,
        phase1: Option<&PhaseIConfig>,
        variant: TwoSidedVariant,
    ) -> Result<TwoSidedOrUpper> {
        match config.sided {
            Sided::Upper => Ok(TwoSidedOrUpper::Upper(self.upper(config, target, phase1)?)),
            Sided::TwoSided => {
                let design = match variant {
                    TwoSidedVariant::Symmetric => TwoSidedDesign {
                        variant,
                        limits: self.symmetric(config, target, phase1)?,
                        xi: None,
                        base_limits: None,
                        at_boundary: false,
                    },
                    TwoSidedVariant::Unbiased => self.unbiased(config, target, phase1)?,
                    TwoSidedVariant::QuasiUnbiased => {
                        let p = phase1.ok_or_else(|| {
                            Error::domain("the quasi-unbiased design needs a phase I sample size")
                        })?;
                        self.quasi_unbiased(config, target, p)?
                    }
                };
                Ok(TwoSidedOrUpper::TwoSided(design))
            }
        }
    }

    /// Solved limits for each phase I size in `m_list`.
    pub fn profile(
        &self,
        config: &ChartConfig,
        target: &DesignTarget,
        variant: TwoSidedVariant,
        m_list: &[u64],
    ) -> Result<Vec<ProfilePoint>> {
        if m_list.is_empty() {
            return Err(Error::domain("phase I size list is empty"));
        }
        if m_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("phase I sizes must be strictly ascending"));
        }
        m_list
            .iter()
            .map(|&m| {
                let phase1 = PhaseIConfig::for_chart(m, config)?;
                let solved = self
                    .solve(config, target, Some(&phase1), variant)
                    .map_err(|e| e.context(&format!("m = {m}")))?;
                Ok(ProfilePoint {
                    m,
                    limits: solved.limits(),
                    xi: solved.xi(),
                })
            })
            .collect()
    }
}

/// Result of [`DesignSolver::solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TwoSidedOrUpper {
    Upper(Limits),
    TwoSided(TwoSidedDesign),
}

impl TwoSidedOrUpper {
    pub fn limits(&self) -> Limits {
        match self {
            TwoSidedOrUpper::Upper(l) => *l,
            TwoSidedOrUpper::TwoSided(d) => d.limits,
        }
    }

    pub fn xi(&self) -> Option<f64> {
        match self {
            TwoSidedOrUpper::Upper(_) => None,
            TwoSidedOrUpper::TwoSided(d) => d.xi,
        }
    }
}

fn check_side(config: &ChartConfig, sided: Sided) -> Result<()> {
    config.validate()?;
    if config.sided != sided {
        return Err(Error::domain(format!(
            "this design needs a {sided} chart, got {}",
            config.sided
        )));
    }
    Ok(())
}

/// In-control standard deviation of the stationary EWMA.
fn ewma_sd(config: &ChartConfig) -> f64 {
    let l = config.lambda;
    config.z0 * (l / (2.0 - l) * 2.0 / config.df() as f64).sqrt()
}

fn symmetric_limits(z0: f64, c: f64) -> Limits {
    Limits::two_sided((z0 - c).max(0.0), z0 + c)
}

/// Upper limit with default solver settings.
pub fn solve_upper(
    config: &ChartConfig,
    target: &DesignTarget,
    phase1: Option<&PhaseIConfig>,
) -> Result<Limits> {
    DesignSolver::default().upper(config, target, phase1)
}

/// Symmetric two-sided limits with default solver settings.
pub fn solve_two_sided_symmetric(
    config: &ChartConfig,
    target: &DesignTarget,
    phase1: Option<&PhaseIConfig>,
) -> Result<Limits> {
    DesignSolver::default().symmetric(config, target, phase1)
}

/// Unbiased two-sided limits with default solver settings.
pub fn solve_two_sided_unbiased(
    config: &ChartConfig,
    target: &DesignTarget,
    phase1: Option<&PhaseIConfig>,
) -> Result<TwoSidedDesign> {
    DesignSolver::default().unbiased(config, target, phase1)
}

/// Quasi-unbiased two-sided limits with default solver settings.
pub fn solve_two_sided_quasi(
    config: &ChartConfig,
    target: &DesignTarget,
    phase1: &PhaseIConfig,
) -> Result<TwoSidedDesign> {
    DesignSolver::default().quasi_unbiased(config, target, phase1)
}

/// Known-variance ARL-unbiased limits with default solver settings.
pub fn solve_two_sided_arl_unbiased(config: &ChartConfig, arl0: f64) -> Result<TwoSidedDesign> {
    DesignSolver::default().arl_unbiased(config, arl0)
}

/// Limits against phase I size with default solver settings.
pub fn limit_vs_m_profile(
    config: &ChartConfig,
    target: &DesignTarget,
    variant: TwoSidedVariant,
    m_list: &[u64],
) -> Result<Vec<ProfilePoint>> {
    DesignSolver::default().profile(config, target, variant, m_list)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_validation() {
        assert!(DesignTarget::quantile(0, 0.25).is_err());
        assert!(DesignTarget::quantile(1000, 1.0).is_err());
        assert!(DesignTarget::arl(0.5).is_err());
        assert!(DesignTarget::arl(500.0).is_ok());
    }

    #[test]
    fn shewhart_upper_arl() {
        let cfg = ChartConfig::upper(1.0, 5).unwrap();
        let lim = solve_upper(&cfg, &DesignTarget::arl(3476.0).unwrap(), None).unwrap();
        assert!((lim.upper - 5.3026).abs() < 2e-4, "{}", lim.upper);
    }

    #[test]
    fn symmetric_is_symmetric() {
        let cfg = ChartConfig::two_sided(0.2, 5).unwrap();
        let t = DesignTarget::quantile(500, 0.3).unwrap();
        let lim = solve_two_sided_symmetric(&cfg, &t, None).unwrap();
        assert!(((lim.upper - 1.0) - (1.0 - lim.lower.unwrap())).abs() < 1e-12);
    }

    #[test]
    fn side_mismatch() {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        let t = DesignTarget::quantile(1000, 0.25).unwrap();
        assert!(solve_two_sided_symmetric(&cfg, &t, None).is_err());
        assert!("quasi".parse::<TwoSidedVariant>().is_ok());
        assert!("other".parse::<TwoSidedVariant>().is_err());
    }
}
