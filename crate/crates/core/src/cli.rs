//! Command-line front end behind the `sewma` binary.
//!
//! Flag names follow the argument names of the reference R functions
//! (`lambda`, `df`, `m`, `sided`, `sigma`, `hs`). Every report echoes the fully
//! resolved parameter set, including numerical settings, so any number can be
//! reproduced exactly.
//!
//! Exit codes: 0 success, 1 validation disagreement (|z| > 3), 2 invalid
//! flags or parameters, 3 numerical failure, 4 infeasible design target.

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::chart::{ChartConfig, Limits, Sided};
use crate::conditional::{self, Method, RunLengthModel};
use crate::design::{DesignSolver, DesignTarget, TwoSidedVariant};
use crate::error::Error;
use crate::simulate::{self, PhaseIMode, SimulationSpec};
use crate::unconditional::{self, PhaseIConfig, Settings, UnconditionalRl};

const DEFAULT_N: u32 = 5;
const DEFAULT_MARKOV_STATES: usize = 500;

#[derive(Parser, Debug)]
#[command(
    name = "sewma",
    version,
    about = "Run lengths and control limits of EWMA S^2 charts with estimated in-control variance"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Significant digits (decimals for limits in text output).
    #[arg(long, global = true)]
    digits: Option<usize>,
    /// File of key=value defaults; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Survival function and cdf of the run length.
    Sf(SfArgs),
    /// Average run length.
    Arl(ArlArgs),
    /// Control limits for a quantile or ARL target.
    Crit(CritArgs),
    /// Control limits for a quantile target P(L <= lbar) = alpha.
    #[command(name = "q-crit")]
    QCrit(CritArgs),
    /// One quantity over a grid of m, lambda or sigma.
    Sweep(SweepArgs),
    /// Compare a numerical result with the Monte Carlo oracle.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Tsv,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodKind {
    Collocation,
    Markov,
}

#[derive(Args, Debug, Clone)]
struct ChartArgs {
    /// Smoothing constant in (0, 1].
    #[arg(long)]
    lambda: Option<f64>,
    /// Subgroup size [default: 5].
    #[arg(long, conflicts_with = "df")]
    n: Option<u32>,
    /// Subgroup degrees of freedom, n - 1.
    #[arg(long)]
    df: Option<u32>,
    /// upper or two.
    #[arg(long, default_value = "upper")]
    sided: Sided,
    /// Head start z0 in units of the in-control variance.
    #[arg(long, default_value_t = 1.0)]
    hs: f64,
    /// Phase I subgroups; omit for a known in-control variance.
    #[arg(long)]
    m: Option<u64>,
    /// Collocation basis size or number of Markov states [default: 50 or 500].
    #[arg(long = "N")]
    size: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodKind::Collocation)]
    method: MethodKind,
    /// Gauss-Legendre nodes for the phase I mixing integral.
    #[arg(long, default_value_t = unconditional::DEFAULT_MIXING_NODES)]
    qm: usize,
}

#[derive(Args, Debug, Clone)]
struct LimitArgs {
    /// Lower control limit (two-sided charts).
    #[arg(long)]
    cl: Option<f64>,
    /// Upper control limit.
    #[arg(long)]
    cu: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct TargetArgs {
    /// Run length bound of the quantile rule.
    #[arg(long)]
    lbar: Option<u64>,
    /// Probability of the quantile rule.
    #[arg(long)]
    alpha: Option<f64>,
    /// In-control ARL of the ARL rule.
    #[arg(long)]
    arl0: Option<f64>,
}

#[derive(Args, Debug)]
struct SfArgs {
    #[command(flatten)]
    chart: ChartArgs,
    #[command(flatten)]
    limits: LimitArgs,
    /// Phase II standard deviation(s), relative to in control.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [1.0])]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    lmax: u64,
    /// Print every k-th run length only.
    #[arg(long, default_value_t = 1)]
    every: u64,
}

#[derive(Args, Debug)]
struct ArlArgs {
    #[command(flatten)]
    chart: ChartArgs,
    #[command(flatten)]
    limits: LimitArgs,
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [1.0])]
    sigma: Vec<f64>,
}

#[derive(Args, Debug)]
struct CritArgs {
    #[command(flatten)]
    chart: ChartArgs,
    #[command(flatten)]
    target: TargetArgs,
    /// symmetric, unbiased or quasi (two-sided charts).
    #[arg(long, default_value = "symmetric")]
    variant: TwoSidedVariant,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Axis {
    M,
    Lambda,
    Sigma,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SweepQuantity {
    Crit,
    Arl,
    Cdf,
    Quantile,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    chart: ChartArgs,
    #[command(flatten)]
    limits: LimitArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value = "symmetric")]
    variant: TwoSidedVariant,
    #[arg(long, value_enum)]
    over: Axis,
    /// Grid: a comma list, or start:end[:step].
    #[arg(long)]
    values: String,
    #[arg(long, value_enum, default_value_t = SweepQuantity::Crit)]
    quantity: SweepQuantity,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Check {
    Cdf,
    Sf,
    Arl,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Phase1Kind {
    /// Draw the pooled estimate from its scaled chi-square law.
    ChiSquare,
    /// Pool m simulated subgroups of normals.
    Raw,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    chart: ChartArgs,
    #[command(flatten)]
    limits: LimitArgs,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = Check::Cdf)]
    quantity: Check,
    /// Run length at which cdf or sf is compared.
    #[arg(long, default_value_t = 1000)]
    lbar: u64,
    #[arg(long, default_value_t = 100_000)]
    reps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Truncation horizon of each simulated run [default: lbar + 1 for cdf and sf,
    /// 1000000 for arl].
    #[arg(long)]
    lcap: Option<u64>,
    #[arg(long = "phase1", value_enum, default_value_t = Phase1Kind::ChiSquare)]
    phase1: Phase1Kind,
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Numeric(Error::Domain(_)) => 2,
            Failure::Numeric(Error::Infeasible(_)) => 4,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Numeric(e) => e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Everything the command computed, before formatting.
struct Report {
    params: Map<String, Value>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
    text: Vec<String>,
    exit: i32,
}

struct Resolved {
    config: ChartConfig,
    phase1: Option<PhaseIConfig>,
    settings: Settings,
}

impl ChartArgs {
    fn n(&self) -> u32 {
        match (self.n, self.df) {
            (Some(n), _) => n,
            (None, Some(df)) => df + 1,
            (None, None) => DEFAULT_N,
        }
    }

    fn method(&self) -> Method {
        match self.method {
            MethodKind::Collocation => Method::Collocation {
                basis: self.size.unwrap_or(conditional::DEFAULT_BASIS),
            },
            MethodKind::Markov => Method::MarkovChain {
                states: self.size.unwrap_or(DEFAULT_MARKOV_STATES),
            },
        }
    }

    fn resolve_with(&self, lambda: Option<f64>, m: Option<u64>) -> Outcome<Resolved> {
        let lambda = lambda
            .or(self.lambda)
            .ok_or_else(|| usage("--lambda is required"))?;
        if self.method().size() < 10 {
            return Err(usage("--N must be at least 10"));
        }
        let config = ChartConfig::with_head_start(lambda, self.n(), self.sided, self.hs)?;
        let phase1 = m.or(self.m).map(|m| PhaseIConfig::for_chart(m, &config)).transpose()?;
        Ok(Resolved {
            config,
            phase1,
            settings: Settings {
                method: self.method(),
                mixing_nodes: self.qm,
            },
        })
    }

    fn resolve(&self) -> Outcome<Resolved> {
        self.resolve_with(None, None)
    }
}

impl LimitArgs {
    fn resolve(&self, config: &ChartConfig) -> Outcome<Limits> {
        let cu = self.cu.ok_or_else(|| usage("--cu is required"))?;
        let limits = match (config.sided, self.cl) {
            (Sided::Upper, None) => Limits::upper(cu),
            (Sided::Upper, Some(_)) => return Err(usage("--cl needs --sided two")),
            (Sided::TwoSided, Some(cl)) => Limits::two_sided(cl, cu),
            (Sided::TwoSided, None) => return Err(usage("--sided two needs --cl")),
        };
        limits.validate_for(config)?;
        Ok(limits)
    }
}

impl TargetArgs {
    fn resolve(&self) -> Outcome<DesignTarget> {
        match (self.lbar, self.alpha, self.arl0) {
            (Some(l), Some(a), None) => Ok(DesignTarget::quantile(l, a)?),
            (None, None, Some(arl0)) => Ok(DesignTarget::arl(arl0)?),
            (_, _, Some(_)) => Err(usage("--arl0 cannot be combined with --lbar/--alpha")),
            _ => Err(usage("give either --lbar and --alpha, or --arl0")),
        }
    }
}

fn chart_params(r: &Resolved) -> Map<String, Value> {
    let mut p = Map::new();
    p.insert("lambda".into(), json!(r.config.lambda));
    p.insert("n".into(), json!(r.config.n));
    p.insert("df".into(), json!(r.config.df()));
    p.insert("sided".into(), json!(r.config.sided.to_string()));
    p.insert("hs".into(), json!(r.config.z0));
    p.insert("m".into(), json!(r.phase1.map(|p| p.m)));
    p.insert("phase1_df".into(), json!(r.phase1.map(|p| p.df_total)));
    let (method, size) = match r.settings.method {
        Method::Collocation { basis } => ("collocation", basis),
        Method::MarkovChain { states } => ("markov", states),
    };
    p.insert("method".into(), json!(method));
    p.insert("N".into(), json!(size));
    if r.phase1.is_some() {
        p.insert("qm".into(), json!(r.settings.mixing_nodes));
        p.insert("mixing_tail".into(), json!(unconditional::MIXING_TAIL));
    }
    p
}

fn limit_params(p: &mut Map<String, Value>, limits: &Limits) {
    p.insert("cl".into(), json!(limits.lower));
    p.insert("cu".into(), json!(limits.upper));
}

fn solver_params(p: &mut Map<String, Value>, solver: &DesignSolver, target: &DesignTarget) {
    p.insert("target".into(), serde_json::to_value(target).unwrap_or(Value::Null));
    p.insert("epsilon".into(), json!(solver.epsilon));
    p.insert("residual_tol".into(), json!(solver.residual_tol));
    p.insert("limit_tol".into(), json!(solver.limit_tol));
}

fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.max(1) - 1, x).parse().unwrap_or(x)
}

fn num(x: f64, digits: usize) -> Value {
    if x.is_finite() {
        json!(round_sig(x, digits))
    } else {
        Value::Null
    }
}

/// Human-readable number with `digits` significant digits.
fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r = round_sig(x, digits);
    if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
        r.to_string()
    } else {
        format!("{:.*e}", digits.max(1) - 1, r)
    }
}

/// ARLs in text output: three significant digits,
/// whole numbers from 100 on, scientific notation for astronomical values.
fn fmt_arl(x: f64, digits: Option<usize>) -> String {
    match digits {
        Some(d) => fmt_sig(x, d),
        None if (100.0..1e15).contains(&x.abs()) => format!("{:.0}", x),
        None => fmt_sig(x, 3),
    }
}

fn cmd_sf(a: &SfArgs, digits: usize) -> Outcome<Report> {
    let r = a.chart.resolve()?;
    let limits = a.limits.resolve(&r.config)?;
    if a.lmax == 0 || a.every == 0 {
        return Err(usage("--lmax and --every must be positive"));
    }
    let mut params = chart_params(&r);
    limit_params(&mut params, &limits);
    params.insert("sigma".into(), json!(a.sigma));
    params.insert("lmax".into(), json!(a.lmax));
    params.insert("every".into(), json!(a.every));

    let uncond = match r.phase1 {
        Some(p) => Some(UnconditionalRl::with_settings(r.config, p, limits, r.settings)?),
        None => None,
    };
    let mut rows = Vec::new();
    let mut text = Vec::new();
    let multi = a.sigma.len() > 1;
    for &sigma in &a.sigma {
        let sf = match &uncond {
            Some(u) => u.sf(sigma, a.lmax)?,
            None => {
                let model = RunLengthModel::build(&r.config, sigma * sigma, &limits, r.settings.method)?;
                let curve = model.curve(a.lmax);
                curve.sf_values()
            }
        };
        for l in (a.every..=a.lmax).step_by(a.every as usize) {
            let p = sf[(l - 1) as usize];
            rows.push(vec![json!(sigma), json!(l), num(p, digits), num(1.0 - p, digits)]);
            let line = format!("{} {} {}", l, fmt_sig(p, digits), fmt_sig(1.0 - p, digits));
            text.push(if multi {
                format!("{} {}", sigma, line)
            } else {
                line
            });
        }
    }
    Ok(Report {
        params,
        columns: vec!["sigma", "l", "sf", "cdf"],
        rows,
        text,
        exit: 0,
    })
}

/// ARL at `sigma`, falling back to a lower bound when some phase I node
/// has no resolvable tail.
fn arl_value(
    r: &Resolved,
    limits: &Limits,
    uncond: Option<&UnconditionalRl>,
    sigma: f64,
) -> crate::Result<(f64, bool)> {
    match uncond {
        None => RunLengthModel::build(&r.config, sigma * sigma, limits, r.settings.method)?
            .arl()
            .map(|a| (a, true)),
        Some(u) => match u.arl(sigma) {
            Ok(a) => Ok((a, true)),
            Err(Error::Divergence { .. }) => {
                let b = u.arl_lower_bound(sigma)?;
                Ok((b.value, b.exact))
            }
            Err(e) => Err(e),
        },
    }
}

fn cmd_arl(a: &ArlArgs, digits: Option<usize>) -> Outcome<Report> {
    let r = a.chart.resolve()?;
    let limits = a.limits.resolve(&r.config)?;
    let mut params = chart_params(&r);
    limit_params(&mut params, &limits);
    params.insert("sigma".into(), json!(a.sigma));
    let uncond = match r.phase1 {
        Some(p) => Some(UnconditionalRl::with_settings(r.config, p, limits, r.settings)?),
        None => None,
    };
    let d = digits.unwrap_or(6);
    let mut rows = Vec::new();
    let mut words = vec!["arl".to_string()];
    for &sigma in &a.sigma {
        let (arl, exact) = arl_value(&r, &limits, uncond.as_ref(), sigma)?;
        rows.push(vec![json!(sigma), num(arl, d), json!(exact)]);
        let s = fmt_arl(arl, digits);
        words.push(if exact { s } else { format!(">{s}") });
    }
    Ok(Report {
        params,
        columns: vec!["sigma", "arl", "exact"],
        rows,
        text: vec![words.join(" ")],
        exit: 0,
    })
}

fn cmd_crit(a: &CritArgs, quantile_only: bool, digits: Option<usize>) -> Outcome<Report> {
    let r = a.chart.resolve()?;
    let target = a.target.resolve()?;
    if quantile_only && matches!(target, DesignTarget::Arl { .. }) {
        return Err(usage("q-crit takes --lbar and --alpha; use crit for --arl0"));
    }
    let solver = DesignSolver {
        settings: r.settings,
        ..DesignSolver::default()
    };
    let mut params = chart_params(&r);
    solver_params(&mut params, &solver, &target);
    if r.config.sided == Sided::TwoSided {
        params.insert("variant".into(), json!(a.variant.to_string()));
    }
    let solved = solver.solve(&r.config, &target, r.phase1.as_ref(), a.variant)?;
    let limits = solved.limits();
    let cl = limits.lower_or_zero();
    let d = digits.unwrap_or(6);
    let dec = digits.unwrap_or(4);
    let mut line = format!("{:.*} {:.*}", dec, cl, dec, limits.upper);
    if let Some(xi) = solved.xi() {
        line.push_str(&format!(" {:.*}", dec, xi));
    }
    Ok(Report {
        params,
        columns: vec!["cl", "cu", "xi"],
        rows: vec![vec![
            num(cl, d),
            num(limits.upper, d),
            solved.xi().map_or(Value::Null, |x| num(x, d)),
        ]],
        text: vec![line],
        exit: 0,
    })
}

/// Grid values from `a,b,c` or `start:end[:step]`.
fn parse_grid(spec: &str) -> Outcome<Vec<f64>> {
    let bad = || usage(format!("cannot parse grid '{spec}'"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(parse).collect::<Outcome<_>>()?;
        let (start, end, step) = match parts[..] {
            [a, b] => (a, b, 1.0),
            [a, b, s] => (a, b, s),
            _ => return Err(bad()),
        };
        if !(step > 0.0) || end < start {
            return Err(bad());
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(usage("grid has more than 100000 points"));
        }
        // trim representation noise such as 0.9500000000000001
        let tidy = |x: f64| format!("{x:.12e}").parse::<f64>().unwrap_or(x);
        Ok((0..count).map(|i| tidy(start + i as f64 * step)).collect())
    } else {
        spec.split(',').map(parse).collect()
    }
}

fn sweep_point(a: &SweepArgs, x: f64, digits: usize) -> crate::Result<Vec<Value>> {
    let point = |e: Failure| match e {
        Failure::Numeric(e) => e,
        Failure::Usage(m) => Error::Domain(m),
    };
    let (lambda, m, sigma) = match a.over {
        Axis::M => (None, Some(x as u64), a.sigma),
        Axis::Lambda => (Some(x), None, a.sigma),
        Axis::Sigma => (None, None, x),
    };
    let r = a.chart.resolve_with(lambda, m).map_err(point)?;
    match a.quantity {
        SweepQuantity::Crit => {
            let target = a.target.resolve().map_err(point)?;
            let solver = DesignSolver {
                settings: r.settings,
                ..DesignSolver::default()
            };
            let solved = solver.solve(&r.config, &target, r.phase1.as_ref(), a.variant)?;
            let limits = solved.limits();
            Ok(vec![
                num(limits.lower_or_zero(), digits),
                num(limits.upper, digits),
                solved.xi().map_or(Value::Null, |v| num(v, digits)),
            ])
        }
        SweepQuantity::Arl | SweepQuantity::Cdf | SweepQuantity::Quantile => {
            let limits = a.limits.resolve(&r.config).map_err(point)?;
            let uncond = match r.phase1 {
                Some(p) => Some(UnconditionalRl::with_settings(r.config, p, limits, r.settings)?),
                None => None,
            };
            let value = match a.quantity {
                SweepQuantity::Arl => {
                    let (v, exact) = arl_value(&r, &limits, uncond.as_ref(), sigma)?;
                    return Ok(vec![num(v, digits), json!(exact)]);
                }
                SweepQuantity::Cdf => {
                    let l = a.target.lbar.ok_or_else(|| Error::domain("--lbar is required"))?;
                    match &uncond {
                        Some(u) => u.cdf(sigma, l)?,
                        None => RunLengthModel::build(&r.config, sigma * sigma, &limits, r.settings.method)?
                            .curve(l)
                            .cdf(l)
                            .ok_or_else(|| Error::NoConvergence(format!("no value at l = {l}")))?,
                    }
                }
                _ => {
                    let alpha = a.target.alpha.ok_or_else(|| Error::domain("--alpha is required"))?;
                    match &uncond {
                        Some(u) => u.quantile(sigma, alpha)? as f64,
                        None => RunLengthModel::build(&r.config, sigma * sigma, &limits, r.settings.method)?
                            .full_curve()?
                            .quantile(alpha)?,
                    }
                }
            };
            Ok(vec![num(value, digits)])
        }
    }
}

fn cmd_sweep(a: &SweepArgs, digits: usize) -> Outcome<Report> {
    let grid = parse_grid(&a.values)?;
    match a.over {
        Axis::M if grid.iter().any(|&m| m < 1.0 || m.fract() != 0.0) => {
            return Err(usage("m values must be positive integers"))
        }
        Axis::Sigma if a.quantity == SweepQuantity::Crit => {
            return Err(usage("limits do not depend on sigma; sweep crit over m or lambda"))
        }
        _ => {}
    }
    match a.quantity {
        SweepQuantity::Cdf if a.target.lbar.is_none() => return Err(usage("--lbar is required")),
        SweepQuantity::Quantile if a.target.alpha.is_none() => {
            return Err(usage("--alpha is required"))
        }
        _ => {}
    }
    let (axis, columns): (&str, Vec<&'static str>) = match a.quantity {
        SweepQuantity::Crit => ("crit", vec!["cl", "cu", "xi"]),
        SweepQuantity::Arl => ("arl", vec!["arl", "exact"]),
        SweepQuantity::Cdf => ("cdf", vec!["cdf"]),
        SweepQuantity::Quantile => ("quantile", vec!["quantile"]),
    };
    let axis_name = match a.over {
        Axis::M => "m",
        Axis::Lambda => "lambda",
        Axis::Sigma => "sigma",
    };
    // resolve once up front so that flag errors exit 2 instead of filling every row
    let probe_lambda = if a.over == Axis::Lambda { Some(grid[0]) } else { None };
    let probe_m = if a.over == Axis::M { Some(grid[0] as u64) } else { None };
    let r = a.chart.resolve_with(probe_lambda, probe_m)?;
    let mut params = chart_params(&r);
    params.insert("over".into(), json!(axis_name));
    params.insert("values".into(), json!(grid));
    params.insert("quantity".into(), json!(axis));
    if a.over == Axis::Lambda {
        params.shift_remove("lambda");
    }
    if a.over != Axis::Sigma && a.quantity != SweepQuantity::Crit {
        params.insert("sigma".into(), json!(a.sigma));
    }
    match a.quantity {
        SweepQuantity::Crit => {
            let target = a.target.resolve()?;
            solver_params(&mut params, &DesignSolver::default(), &target);
            if r.config.sided == Sided::TwoSided {
                params.insert("variant".into(), json!(a.variant.to_string()));
            }
        }
        _ => {
            let limits = a.limits.resolve(&r.config)?;
            limit_params(&mut params, &limits);
            match a.quantity {
                SweepQuantity::Cdf => {
                    params.insert("lbar".into(), json!(a.target.lbar));
                }
                SweepQuantity::Quantile => {
                    params.insert("alpha".into(), json!(a.target.alpha));
                }
                _ => {}
            }
        }
    }
    if a.over != Axis::M {
        params.shift_remove("m");
        params.shift_remove("phase1_df");
        params.insert("m".into(), json!(a.chart.m));
    }

    let width = columns.len();
    let rows: Vec<Vec<Value>> = grid
        .par_iter()
        .map(|&x| {
            let key = if a.over == Axis::M { json!(x as u64) } else { json!(x) };
            let mut row = vec![key];
            match sweep_point(a, x, digits) {
                Ok(vals) => {
                    row.extend(vals);
                    row.push(Value::Null);
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(Value::Null, width));
                    row.push(json!(e.to_string()));
                }
            }
            row
        })
        .collect();
    let mut all_columns = vec![axis_name];
    all_columns.extend(columns);
    all_columns.push("error");
    let text = std::iter::once(all_columns.join(" "))
        .chain(rows.iter().map(|row| {
            row.iter()
                .map(|v| match v {
                    Value::Null => "-".to_string(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(" ")
        }))
        .collect();
    Ok(Report {
        params,
        columns: all_columns,
        rows,
        text,
        exit: 0,
    })
}

fn cmd_validate(a: &ValidateArgs, digits: usize) -> Outcome<Report> {
    let r = a.chart.resolve()?;
    let limits = a.limits.resolve(&r.config)?;
    if a.lbar == 0 {
        return Err(usage("--lbar must be positive"));
    }
    let mode = match (r.phase1, a.phase1) {
        (None, _) => PhaseIMode::Known,
        (Some(p), Phase1Kind::ChiSquare) => PhaseIMode::ChiSquare(p),
        (Some(p), Phase1Kind::Raw) => PhaseIMode::RawNormals(p),
    };
    // runs beyond lbar carry no information about P(L <= lbar)
    let lcap = a.lcap.unwrap_or(match a.quantity {
        Check::Arl => simulate::DEFAULT_L_CAP,
        Check::Cdf | Check::Sf => a.lbar + 1,
    });
    let spec = SimulationSpec::new(r.config, mode, a.sigma, limits)
        .replications(a.reps)
        .l_cap(lcap)
        .seed(a.seed);
    spec.validate()?;

    let uncond = match r.phase1 {
        Some(p) => Some(UnconditionalRl::with_settings(r.config, p, limits, r.settings)?),
        None => None,
    };
    let numeric_cdf = |l: u64| -> crate::Result<f64> {
        match &uncond {
            Some(u) => u.cdf(a.sigma, l),
            None => RunLengthModel::build(&r.config, a.sigma * a.sigma, &limits, r.settings.method)?
                .curve(l)
                .cdf(l)
                .ok_or_else(|| Error::NoConvergence(format!("no value at l = {l}"))),
        }
    };
    let numeric = match a.quantity {
        Check::Cdf => numeric_cdf(a.lbar)?,
        Check::Sf => 1.0 - numeric_cdf(a.lbar)?,
        Check::Arl => arl_value(&r, &limits, uncond.as_ref(), a.sigma)?.0,
    };
    let mc = simulate::estimate_unconditional(&spec)?;
    let estimate = match a.quantity {
        Check::Cdf => mc.cdf(a.lbar),
        Check::Sf => mc.sf(a.lbar),
        Check::Arl => mc.arl(),
    }
    .ok_or_else(|| {
        Error::NoConvergence(format!(
            "{} of {} simulated runs were censored at {}; raise --lcap",
            mc.censored_count, mc.replications, mc.l_cap
        ))
    })?;
    let z = estimate.z_score(numeric);
    let quantity = match a.quantity {
        Check::Cdf => "cdf",
        Check::Sf => "sf",
        Check::Arl => "arl",
    };

    let mut params = chart_params(&r);
    limit_params(&mut params, &limits);
    params.insert("sigma".into(), json!(a.sigma));
    params.insert("quantity".into(), json!(quantity));
    if a.quantity != Check::Arl {
        params.insert("lbar".into(), json!(a.lbar));
    }
    params.insert("reps".into(), json!(a.reps));
    params.insert("seed".into(), json!(a.seed));
    params.insert("lcap".into(), json!(lcap));
    params.insert("phase1_sampling".into(), json!(match mode {
        PhaseIMode::Known => "known",
        PhaseIMode::ChiSquare(_) => "chi_square",
        PhaseIMode::RawNormals(_) => "raw_normals",
    }));

    let pass = z.abs() <= 3.0;
    let text = format!(
        "{} numeric {} mc {} se {} z {:.2} {}",
        quantity,
        fmt_sig(numeric, digits),
        fmt_sig(estimate.value, digits),
        fmt_sig(estimate.se, 3),
        z,
        if pass { "ok" } else { "DISAGREE" }
    );
    Ok(Report {
        params,
        columns: vec!["quantity", "numeric", "mc", "se", "z", "censored", "pass"],
        rows: vec![vec![
            json!(quantity),
            num(numeric, digits),
            num(estimate.value, digits),
            num(estimate.se, digits),
            num(z, 4),
            json!(mc.censored_count),
            json!(pass),
        ]],
        text: vec![text],
        exit: if pass { 0 } else { 1 },
    })
}

fn cell(v: &Value, sep: char) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains(sep) || s.contains('"') || s.contains('\n') => {
            format!("\"{}\"", s.replace('"', "\"\""))
        }
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render(report: &Report, command: &str, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
    match format {
        Format::Json => {
            let mut params = Map::new();
            params.insert("command".into(), json!(command));
            params.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
            params.extend(report.params.clone());
            let results: Vec<Value> = report
                .rows
                .iter()
                .map(|row| {
                    Value::Object(
                        report
                            .columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), v.clone()))
                            .collect(),
                    )
                })
                .collect();
            let doc = json!({ "params": params, "results": results });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)
        }
        Format::Csv | Format::Tsv => {
            let sep = if format == Format::Csv { ',' } else { '\t' };
            let mut params = Map::new();
            params.insert("command".into(), json!(command));
            params.extend(report.params.clone());
            writeln!(out, "# params: {}", Value::Object(params))?;
            writeln!(out, "{}", report.columns.join(&sep.to_string()))?;
            for row in &report.rows {
                let cells: Vec<String> = row.iter().map(|v| cell(v, sep)).collect();
                writeln!(out, "{}", cells.join(&sep.to_string()))?;
            }
            Ok(())
        }
        Format::Text => {
            for line in &report.text {
                writeln!(out, "{line}")?;
            }
            Ok(())
        }
    }
}

/// Parse a key=value configuration file into `--key value` pairs, skipping
/// keys already given on the command line.
fn config_args(path: &Path, given: &[String]) -> Outcome<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        let flag = format!("--{}", key.trim());
        let overridden = given
            .iter()
            .any(|g| *g == flag || g.starts_with(&format!("{flag}=")));
        if !overridden {
            args.push(OsString::from(flag));
            args.push(OsString::from(value.trim()));
        }
    }
    Ok(args)
}

const SUBCOMMANDS: [&str; 6] = ["sf", "arl", "crit", "q-crit", "sweep", "validate"];

/// Splice the `--config` file's entries in right after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Outcome<Vec<OsString>> {
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strings.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strings.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = path else {
        return Ok(args);
    };
    let extra = config_args(Path::new(&path), &strings)?;
    let at = strings
        .iter()
        .skip(1)
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(args.len(), |i| i + 2);
    let mut out = args;
    out.splice(at..at, extra);
    Ok(out)
}

/// Run the CLI on `args` (including the program name), writing results to
/// `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            return f.code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let sig = cli.digits.unwrap_or(6);
    let (name, outcome) = match &cli.command {
        Command::Sf(a) => ("sf", cmd_sf(a, sig)),
        Command::Arl(a) => ("arl", cmd_arl(a, cli.digits)),
        Command::Crit(a) => ("crit", cmd_crit(a, false, cli.digits)),
        Command::QCrit(a) => ("q-crit", cmd_crit(a, true, cli.digits)),
        Command::Sweep(a) => ("sweep", cmd_sweep(a, sig)),
        Command::Validate(a) => ("validate", cmd_validate(a, sig)),
    };
    match outcome {
        Ok(report) => {
            if let Err(e) = render(&report, name, cli.format, out) {
                let _ = writeln!(err, "error: cannot write output: {e}");
                return 3;
            }
            report.exit
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

/// Entry point of the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
