use proptest::prelude::*;
use sewma::conditional::{Method, RunLengthModel};
use sewma::design::solve_upper;
use sewma::numerics::{chi2_cdf, gauss_legendre};
use sewma::{ChartConfig, DesignTarget, Limits, PhaseIConfig, UnconditionalRl};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn survival_is_nonincreasing(
        lambda in 0.05f64..1.0,
        width in 0.2f64..2.0,
        sigma in 0.7f64..1.6,
        lower in 0.3f64..0.95,
        two in any::<bool>(),
    ) {
        let (config, limits) = if two {
            let cfg = ChartConfig::two_sided(lambda, 5).unwrap();
            (cfg, Limits::two_sided(lower, 1.0 + width))
        } else {
            (ChartConfig::upper(lambda, 5).unwrap(), Limits::upper(1.0 + width))
        };
        let curve = RunLengthModel::build(&config, sigma * sigma, &limits, Method::default())
            .unwrap()
            .curve(400);
        let sf = curve.sf_values();
        prop_assert!(sf[0] <= 1.0);
        for w in sf.windows(2) {
            prop_assert!(w[1] <= w[0], "{} then {}", w[0], w[1]);
            prop_assert!(w[1] >= 0.0);
        }
    }

    #[test]
    fn shewhart_is_geometric(c_u in 2.0f64..8.0, sigma in 0.8f64..1.5, n in 2u32..10) {
        let cfg = ChartConfig::upper(1.0, n).unwrap();
        let df = (n - 1) as f64;
        let f = chi2_cdf(df * c_u / (sigma * sigma), df).unwrap();
        let curve = RunLengthModel::build(&cfg, sigma * sigma, &Limits::upper(c_u), Method::default())
            .unwrap()
            .curve(200);
        for l in [1u64, 2, 10, 50, 200] {
            let p = curve.sf(l).unwrap();
            let g = f.powi(l as i32);
            prop_assert!((p - g).abs() <= 1e-10 * g.max(1e-300), "l {l}: {p} vs {g}");
        }
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials(
        n in 1usize..=60,
        a in -3.0f64..1.0,
        len in 0.1f64..4.0,
        coeffs in proptest::collection::vec(-1.0f64..1.0, 1..=8),
    ) {
        let b = a + len;
        let degree = (2 * n - 1).min(coeffs.len() - 1);
        let c = &coeffs[..=degree];
        let rule = gauss_legendre(n, a, b).unwrap();
        let q = rule.integrate(|x| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci));
        let antider = |x: f64| {
            c.iter()
                .enumerate()
                .map(|(k, &ci)| ci * x.powi(k as i32 + 1) / (k + 1) as f64)
                .sum::<f64>()
        };
        let exact = antider(b) - antider(a);
        let scale = c.iter().map(|ci| ci.abs()).sum::<f64>() * (a.abs().max(b.abs()) + 1.0).powi(degree as i32 + 1);
        prop_assert!((q - exact).abs() <= 1e-12 * scale, "{q} vs {exact}");
    }
}

proptest! {
    #![proptest_config(cases(8))]

    /// On an upper chart the run length shrinks as the estimate does, so the
    /// mixed survival function lies between the conditional ones at the cuts.
    #[test]
    fn mixture_lies_between_extreme_nodes(
        m in 10u64..200,
        c_u in 1.4f64..2.0,
        sigma in 0.9f64..1.3,
        l in 1u64..2000,
    ) {
        let cfg = ChartConfig::upper(0.1, 5).unwrap();
        let limits = Limits::upper(c_u);
        let u = UnconditionalRl::new(cfg, PhaseIConfig::new(m, 5).unwrap(), limits).unwrap();
        let rule = u.mixing_rule();
        let at = |s2: f64| {
            RunLengthModel::build(&cfg, sigma * sigma / s2, &limits, Method::default())
                .unwrap()
                .curve(l)
                .sf(l)
                .unwrap()
        };
        let lo = at(rule.lower_cut);
        let hi = at(rule.upper_cut);
        let mixed = 1.0 - u.cdf(sigma, l).unwrap();
        prop_assert!(lo <= mixed + 1e-9 && mixed <= hi + 1e-9, "{lo} <= {mixed} <= {hi}");
    }

    #[test]
    fn quantile_design_round_trip(
        lambda in prop::sample::select(vec![0.1, 0.2, 0.3]),
        l_bar in 200u64..2000,
        alpha in 0.1f64..0.5,
    ) {
        let cfg = ChartConfig::upper(lambda, 5).unwrap();
        let target = DesignTarget::quantile(l_bar, alpha).unwrap();
        let limits = solve_upper(&cfg, &target, None).unwrap();
        let p = RunLengthModel::build(&cfg, 1.0, &limits, Method::default())
            .unwrap()
            .curve(l_bar)
            .cdf(l_bar)
            .unwrap();
        prop_assert!((p - alpha).abs() < 1e-6, "{p} vs {alpha}");
    }

    #[test]
    fn arl_design_round_trip(lambda in 0.05f64..1.0, arl0 in 50.0f64..2000.0) {
        let cfg = ChartConfig::upper(lambda, 5).unwrap();
        let limits = solve_upper(&cfg, &DesignTarget::arl(arl0).unwrap(), None).unwrap();
        let arl = RunLengthModel::build(&cfg, 1.0, &limits, Method::default())
            .unwrap()
            .arl()
            .unwrap();
        prop_assert!((arl / arl0 - 1.0).abs() < 1e-6, "{arl} vs {arl0}");
    }
}
