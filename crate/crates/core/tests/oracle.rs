//! Numerical results against the Monte Carlo oracle at 10⁵ replications.

use sewma::conditional::{Method, RunLengthModel};
use sewma::numerics::chi2_cdf;
use sewma::simulate::{
    estimate_unconditional, replication_rng, simulate_phase1_estimate, EmpiricalRL,
};
use sewma::{ChartConfig, Limits, PhaseIConfig, PhaseIMode, SimulationSpec, UnconditionalRl};

const REPS: u64 = 100_000;

fn upper(lambda: f64) -> ChartConfig {
    ChartConfig::upper(lambda, 5).unwrap()
}

fn run(spec: SimulationSpec) -> EmpiricalRL {
    estimate_unconditional(&spec).unwrap()
}

fn within_3se(label: &str, reference: f64, value: f64, se: f64) {
    let z = (reference - value) / se;
    assert!(z.abs() < 3.0, "{label}: reference {reference}, simulated {value} ± {se} (z = {z:.2})");
}

/// A reference value printed to `half_ulp` precision stands for an interval.
fn within_3se_of_rounded(label: &str, printed: f64, half_ulp: f64, value: f64, se: f64) {
    let gap = ((value - printed).abs() - half_ulp).max(0.0);
    assert!(gap < 3.0 * se, "{label}: printed {printed}, simulated {value} ± {se}");
}

#[test]
fn phase1_estimate_moments_and_ks() {
    let cfg = upper(0.1);
    let p = PhaseIConfig::new(50, 5).unwrap();
    let k = p.df_total as f64;
    let n = 1_000_000u64;
    let mut rng = replication_rng(5, 0);
    let mut xs: Vec<f64> = (0..n)
        .map(|_| simulate_phase1_estimate(&cfg, &PhaseIMode::ChiSquare(p), &mut rng).unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() < 0.002, "{mean}");
    assert!((var / (2.0 / k) - 1.0).abs() < 0.05, "{var}");

    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = chi2_cdf(k * x, k).unwrap();
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.002, "{ks}");
}

#[test]
fn raw_normal_phase1_has_the_same_law() {
    let cfg = upper(0.1);
    let p = PhaseIConfig::new(10, 5).unwrap();
    let n = 100_000u64;
    let mut rng = replication_rng(9, 0);
    let xs: Vec<f64> = (0..n)
        .map(|_| simulate_phase1_estimate(&cfg, &PhaseIMode::RawNormals(p), &mut rng).unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() < 4.0 * (2.0 / 40.0 / n as f64).sqrt());
    assert!((var / (2.0 / 40.0) - 1.0).abs() < 0.03, "{var}");
}

#[test]
fn shewhart_geometric_mean() {
    let cfg = upper(1.0);
    let c_u = 3.0;
    let arl = 1.0 / (1.0 - chi2_cdf(4.0 * c_u, 4.0).unwrap());
    let e = run(SimulationSpec::new(cfg, PhaseIMode::Known, 1.0, Limits::upper(c_u)).replications(REPS));
    let est = e.arl().unwrap();
    within_3se("Shewhart ARL", arl, est.value, est.se);
}

#[test]
fn known_variance_arls() {
    let cfg = upper(0.1);
    let e = run(SimulationSpec::new(cfg, PhaseIMode::Known, 1.0, Limits::upper(1.4781)).replications(REPS));
    let est = e.arl().unwrap();
    within_3se("ARL 500", 500.0, est.value, est.se);

    let e = run(SimulationSpec::new(cfg, PhaseIMode::Known, 1.5, Limits::upper(1.6453)).replications(REPS));
    let est = e.arl().unwrap();
    within_3se_of_rounded("E_1.5(L)", 8.05, 0.005, est.value, est.se);
}

#[test]
fn design_point_probability() {
    let cfg = upper(0.1);
    let p = PhaseIConfig::new(50, 5).unwrap();
    let limits = Limits::upper(1.719846);
    let numeric = UnconditionalRl::new(cfg, p, limits).unwrap().cdf(1.0, 1000).unwrap();
    let e = run(
        SimulationSpec::new(cfg, PhaseIMode::ChiSquare(p), 1.0, limits)
            .replications(REPS)
            .l_cap(1001),
    );
    let est = e.cdf(1000).unwrap();
    within_3se("P(L<=1000)", 0.25, est.value, est.se);
    within_3se("P(L<=1000) numeric", numeric, est.value, est.se);
}

#[test]
fn censored_fraction_for_small_phase1() {
    let cfg = upper(0.1);
    let p = PhaseIConfig::new(10, 5).unwrap();
    let e = run(
        SimulationSpec::new(cfg, PhaseIMode::ChiSquare(p), 1.0, Limits::upper(1.4781))
            .replications(20_000)
            .l_cap(100_000)
            .seed(3),
    );
    assert!((e.censored_fraction() - 0.1).abs() < 0.01, "{}", e.censored_fraction());
    assert!(e.arl().is_none());
}

#[test]
fn known_mode_matches_collocation_pointwise() {
    let cfg = upper(0.1);
    let limits = Limits::upper(1.4781);
    let curve = RunLengthModel::build(&cfg, 1.0, &limits, Method::default())
        .unwrap()
        .curve(2000);
    let e = run(
        SimulationSpec::new(cfg, PhaseIMode::Known, 1.0, limits)
            .replications(REPS)
            .l_cap(2001)
            .seed(17),
    );
    for l in [5, 20, 100, 300, 1000, 2000] {
        let est = e.sf(l).unwrap();
        within_3se(&format!("sf({l})"), curve.sf(l).unwrap(), est.value, est.se);
    }
}

#[test]
fn two_sided_out_of_control_arl() {
    let cfg = ChartConfig::two_sided(0.1, 5).unwrap();
    let p = PhaseIConfig::new(50, 5).unwrap();
    let limits = Limits::two_sided(0.5287, 1.8249);
    let numeric = UnconditionalRl::new(cfg, p, limits).unwrap().arl(0.5).unwrap();
    let e = run(SimulationSpec::new(cfg, PhaseIMode::ChiSquare(p), 0.5, limits).replications(REPS));
    let est = e.arl().unwrap();
    within_3se("E_0.5(L)", numeric, est.value, est.se);
    within_3se_of_rounded("E_0.5(L) reference", 10.0, 0.05, est.value, est.se);
}

#[test]
fn out_of_control_survival_with_estimated_variance() {
    let cfg = upper(0.2);
    let p = PhaseIConfig::new(50, 5).unwrap();
    let limits = Limits::upper(2.1538);
    let u = UnconditionalRl::new(cfg, p, limits).unwrap();
    let e = run(
        SimulationSpec::new(cfg, PhaseIMode::RawNormals(p), 1.5, limits)
            .replications(REPS)
            .l_cap(101)
            .seed(23),
    );
    for l in [5, 10, 20] {
        let est = e.cdf(l).unwrap();
        within_3se(&format!("cdf({l})"), u.cdf(1.5, l).unwrap(), est.value, est.se);
    }
}
