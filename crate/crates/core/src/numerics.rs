//! Special functions and quadrature primitives.
//!
//! Chi-square density, distribution and quantile functions (via the regularized
//! incomplete gamma function), Gauss–Legendre rules and shifted Chebyshev
//! polynomials. Densities and incomplete-gamma prefactors are evaluated with
//! Loader's saddle-point form so that large degrees of freedom (millions) keep
//! full relative precision.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EPS: f64 = f64::EPSILON;

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x >= 10.0 {
        let x2 = x * x;
        let corr = (1.0 / 12.0
            - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * x2)) / x2) / x2) / x2)
            / x;
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + corr;
    }
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + a.ln()
}

/// ln Γ(n+1) − [(n+½) ln n − n + ln √(2π)].
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term x ln(x/np) + np − x, accurate when x ≈ np.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// λ^x e^{−λ} / Γ(x+1) for real x ≥ 0.
fn dpois_raw(x: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if x == 0.0 { 1.0 } else { 0.0 };
    }
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return (-lambda).exp();
    }
    if !lambda.is_finite() {
        return 0.0;
    }
    (-stirlerr(x) - bd0(x, lambda)).exp() / (2.0 * PI * x).sqrt()
}

/// Regularized incomplete gamma functions (P(a,x), Q(a,x)).
pub(crate) fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    // integer shape in the upper region: finite Poisson sum
    if a.fract() == 0.0 && a <= 50.0 && x >= a {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..(a as usize) {
            term *= x / i as f64;
            sum += term;
        }
        let q = (sum.ln() - x).exp();
        return (1.0 - q, q);
    }
    if x < a + 1.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= x / (a + k);
            sum += term;
            if term < sum * EPS || k > 1e7 {
                break;
            }
            k += 1.0;
        }
        let p = (dpois_raw(a, x) * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // modified Lentz continued fraction for Q
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut i = 1.0;
        loop {
            let an = -i * (i - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS || i > 1e7 {
                break;
            }
            i += 1.0;
        }
        let q = (a * dpois_raw(a, x) * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9 relative).
pub(crate) fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Chi-square distribution with real, positive degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    df: f64,
}

impl ChiSquare {
    pub fn new(df: f64) -> Result<Self> {
        if !(df > 0.0) || !df.is_finite() {
            return Err(Error::domain(format!(
                "chi-square degrees of freedom must be positive, got {df}"
            )));
        }
        Ok(Self { df })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let a = 0.5 * self.df;
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return if a < 1.0 {
                f64::INFINITY
            } else if a == 1.0 {
                0.5
            } else {
                0.0
            };
        }
        if a < 1.0 {
            dpois_raw(a, 0.5 * x) * a / x
        } else {
            0.5 * dpois_raw(a - 1.0, 0.5 * x)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_pq(0.5 * self.df, 0.5 * x).0
    }

    /// Upper tail 1 − F(x), computed without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        gamma_pq(0.5 * self.df, 0.5 * x).1
    }

    /// P(x1 < X ≤ x2), taking differences on whichever tail keeps precision.
    pub fn interval(&self, x1: f64, x2: f64) -> f64 {
        if x2 <= x1 {
            return 0.0;
        }
        let a = 0.5 * self.df;
        if 0.5 * x1 >= a {
            let (_, q1) = gamma_pq(a, 0.5 * x1);
            let (_, q2) = gamma_pq(a, 0.5 * x2);
            (q1 - q2).max(0.0)
        } else {
            let (p1, _) = gamma_pq(a, 0.5 * x1);
            let (p2, _) = gamma_pq(a, 0.5 * x2);
            (p2 - p1).max(0.0)
        }
    }

    /// Lower-tail quantile: x with F(x) = p.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile probability must lie in (0,1), got {p}"
            )));
        }
        Ok(self.solve_quantile(p, 1.0 - p))
    }

    /// Upper-tail quantile: x with 1 − F(x) = q; precise for tiny q.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain(format!(
                "tail probability must lie in (0,1), got {q}"
            )));
        }
        Ok(self.solve_quantile(1.0 - q, q))
    }

    fn solve_quantile(&self, p: f64, q: f64) -> f64 {
        let df = self.df;
        let use_lower = p <= 0.5;
        // log of the tracked tail minus its target; increasing in x for lower, decreasing for upper
        let resid = |x: f64| -> f64 {
            if use_lower {
                self.cdf(x).ln() - p.ln()
            } else {
                self.sf(x).ln() - q.ln()
            }
        };
        let z = if use_lower {
            normal_quantile(p)
        } else {
            -normal_quantile(q)
        };
        let h = 2.0 / (9.0 * df);
        let wh = df * (1.0 - h + z * h.sqrt()).powi(3);
        let mut x = if wh > 0.0 && wh.is_finite() {
            wh
        } else {
            let a = 0.5 * df;
            2.0 * (p.ln() + ln_gamma(a + 1.0)).exp().powf(1.0 / a)
        };
        if !(x > 0.0) || !x.is_finite() {
            x = df;
        }
        // bracket [lo, hi]: sign of the "increasing" residual negative at lo, positive at hi
        let inc = |x: f64| if use_lower { resid(x) } else { -resid(x) };
        let mut lo = 0.0_f64;
        let mut hi = x.max(1e-300);
        let mut guard = 0;
        while inc(hi) < 0.0 && guard < 2000 {
            lo = hi;
            hi = 2.0 * hi + 1.0;
            guard += 1;
        }
        x = x.clamp(lo, hi);
        if x <= 0.0 {
            x = 0.5 * hi;
        }
        for _ in 0..300 {
            let r = inc(x);
            if r == 0.0 {
                return x;
            }
            if r < 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let f = self.pdf(x);
            let tail = if use_lower { self.cdf(x) } else { self.sf(x) };
            // d/dx ln tail = ±f/tail; inc' = f/tail in both branches
            let slope = f / tail;
            let mut next = x - r / slope;
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 4.0 * EPS * x.abs() || hi - lo <= 4.0 * EPS * hi {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Chi-square density; `df ≤ 0` is a domain error, negative `x` gives 0.
pub fn chi2_pdf(x: f64, df: f64) -> Result<f64> {
    Ok(ChiSquare::new(df)?.pdf(x))
}

/// Chi-square distribution function, the regularized lower incomplete gamma P(df/2, x/2).
pub fn chi2_cdf(x: f64, df: f64) -> Result<f64> {
    Ok(ChiSquare::new(df)?.cdf(x))
}

/// Chi-square survival function Q(df/2, x/2).
pub fn chi2_sf(x: f64, df: f64) -> Result<f64> {
    Ok(ChiSquare::new(df)?.sf(x))
}

/// Chi-square quantile for `p ∈ (0,1)`.
pub fn chi2_quantile(p: f64, df: f64) -> Result<f64> {
    ChiSquare::new(df)?.quantile(p)
}

/// Nodes and weights of a quadrature rule on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

type ReferenceRule = Arc<(Vec<f64>, Vec<f64>)>;

/// Gauss–Legendre nodes and weights on [-1, 1], cached per size.
pub(crate) fn legendre_reference(n: usize) -> ReferenceRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, ReferenceRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_legendre(n));
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(n, Arc::clone(&rule));
    rule
}

fn compute_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                // refresh derivative at the converged root
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule with `n` nodes on `[a, b]`, exact for polynomials of degree ≤ 2n−1.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::domain("quadrature needs at least one node"));
    }
    if !(a < b) {
        return Err(Error::domain(format!(
            "quadrature interval must satisfy a < b, got [{a}, {b}]"
        )));
    }
    let reference = legendre_reference(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(QuadratureRule {
        nodes: reference.0.iter().map(|t| mid + half * t).collect(),
        weights: reference.1.iter().map(|w| half * w).collect(),
        a,
        b,
    })
}

/// Shifted Chebyshev polynomial T_{s−1} evaluated on `[c_lo, c_hi]`.
pub fn chebyshev_t_shifted(s: usize, z: f64, c_lo: f64, c_hi: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::domain("Chebyshev index starts at 1"));
    }
    if !(c_lo < c_hi) {
        return Err(Error::domain(format!(
            "Chebyshev interval must satisfy c_lo < c_hi, got [{c_lo}, {c_hi}]"
        )));
    }
    let x = (2.0 * z - (c_hi + c_lo)) / (c_hi - c_lo);
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "z = {z} lies outside [{c_lo}, {c_hi}]"
        )));
    }
    Ok(((s - 1) as f64 * x.clamp(-1.0, 1.0).acos()).cos())
}

/// Roots of T_N shifted to `[c_lo, c_hi]`, in the order r = 1..N (decreasing).
pub fn chebyshev_nodes(n: usize, c_lo: f64, c_hi: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("need at least one Chebyshev node"));
    }
    if !(c_lo < c_hi) {
        return Err(Error::domain(format!(
            "Chebyshev interval must satisfy c_lo < c_hi, got [{c_lo}, {c_hi}]"
        )));
    }
    let mid = 0.5 * (c_hi + c_lo);
    let half = 0.5 * (c_hi - c_lo);
    Ok((1..=n)
        .map(|r| mid + half * ((2 * r - 1) as f64 * PI / (2 * n) as f64).cos())
        .collect())
}

/// Fill `out[k] = T_k(x)` for k = 0..out.len() by the three-term recurrence.
#[inline]
pub(crate) fn chebyshev_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    let two_x = 2.0 * x;
    for k in 2..out.len() {
        out[k] = two_x * out[k - 1] - out[k - 2];
    }
}
