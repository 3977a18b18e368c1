//! Scalar root finding for monotone residuals.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tolerance {
    /// Stop once the bracket is narrower than this.
    pub x: f64,
    /// Stop once the residual is this small.
    pub f: f64,
    pub max_iter: usize,
}

/// Slack allowed for numerical noise before a residual counts as non-monotone.
const MONOTONE_SLACK: f64 = 1e-6;

/// A sign change `f(a) ≥ 0 ≥ f(b)` of a decreasing function.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bracket {
    pub a: f64,
    pub fa: f64,
    pub b: f64,
    pub fb: f64,
}

/// Walk from `x0` in steps that double until a decreasing `f` changes sign.
///
/// The search stays inside `(lo, hi]`; approaching `lo` it halves the distance
/// instead of stepping past it.
pub(crate) fn bracket_decreasing<F>(
    f: &mut F,
    x0: f64,
    step: f64,
    lo: f64,
    hi: f64,
) -> Result<Bracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    let x0 = x0.clamp(lo + 0.5 * (hi - lo).min(step), hi);
    let f0 = f(x0)?;
    let mut x = x0;
    let mut fx = f0;
    let mut step = step;
    if f0 > 0.0 {
        loop {
            if x >= hi {
                return Err(Error::Infeasible(format!(
                    "residual stays positive up to {hi} (last value {fx:.3e})"
                )));
            }
            let xn = (x + step).min(hi);
            let fxn = f(xn)?;
            if fxn > fx + MONOTONE_SLACK {
                return Err(Error::NonMonotone(format!(
                    "residual rose from {fx:.6e} at {x} to {fxn:.6e} at {xn}"
                )));
            }
            if fxn <= 0.0 {
                return Ok(Bracket {
                    a: x,
                    fa: fx,
                    b: xn,
                    fb: fxn,
                });
            }
            x = xn;
            fx = fxn;
            step *= 2.0;
        }
    } else {
        for _ in 0..200 {
            let xn = if x - step > lo {
                x - step
            } else {
                lo + 0.5 * (x - lo)
            };
            if xn <= lo || xn == x {
                break;
            }
            let fxn = f(xn)?;
            if fxn < fx - MONOTONE_SLACK {
                return Err(Error::NonMonotone(format!(
                    "residual fell from {fx:.6e} at {x} to {fxn:.6e} at {xn}"
                )));
            }
            if fxn >= 0.0 {
                return Ok(Bracket {
                    a: xn,
                    fa: fxn,
                    b: x,
                    fb: fx,
                });
            }
            x = xn;
            fx = fxn;
            step *= 2.0;
        }
        Err(Error::Infeasible(format!(
            "residual stays negative down to {lo} (last value {fx:.3e})"
        )))
    }
}

/// Brent's method on a bracket; secant and inverse quadratic steps with bisection safeguard.
pub(crate) fn brent<F>(f: &mut F, bracket: Bracket, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let Bracket {
        mut a,
        mut fa,
        mut b,
        mut fb,
    } = bracket;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Infeasible(format!(
            "no sign change between {a} and {b}"
        )));
    }
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.x;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= tol.f {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b)?;
    }
    Err(Error::NoConvergence(format!(
        "root finder stopped after {} iterations near {b}",
        tol.max_iter
    )))
}

/// Root of a decreasing residual, starting from `x0` inside `(lo, hi]`.
pub(crate) fn solve_decreasing<F>(
    mut f: F,
    x0: f64,
    step: f64,
    lo: f64,
    hi: f64,
    tol: Tolerance,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let bracket = bracket_decreasing(&mut f, x0, step, lo, hi)?;
    brent(&mut f, bracket, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: Tolerance = Tolerance {
        x: 1e-12,
        f: 1e-14,
        max_iter: 200,
    };

    #[test]
    fn finds_cubic_root() {
        let r = solve_decreasing(|x| Ok(8.0 - x * x * x), 0.5, 0.1, 0.0, 100.0, TOL).unwrap();
        assert!((r - 2.0).abs() < 1e-10);
    }

    #[test]
    fn approaches_open_lower_bound() {
        let r = solve_decreasing(|x| Ok(1e-3 - x), 5.0, 0.5, 0.0, 10.0, TOL).unwrap();
        assert!((r - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn reports_infeasible_and_nonmonotone() {
        let e = solve_decreasing(|x| Ok(10.0 - x), 1.0, 0.5, 0.0, 5.0, TOL).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)));
        let e = solve_decreasing(|x| Ok(x - 0.5), 1.0, 0.5, 0.0, 5.0, TOL).unwrap_err();
        assert!(matches!(e, Error::NonMonotone(_)), "{e:?}");
    }
}
