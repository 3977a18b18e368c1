//! Survival-function curves with a geometric tail.

use serde::Serialize;

use crate::error::{Error, Result};

/// Geometric decay `p_{l+1} = ratio · p_l` for `l ≥ start`.
///
/// `exit = 1 − ratio` is stored separately because it is computed directly from
/// the probability mass function and stays accurate when `ratio` rounds to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricTail {
    pub start: u64,
    pub ratio: f64,
    pub exit: f64,
}

/// Run-length survival function `p_l = P(L > l)`, `l = 1, 2, …`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RlCurve {
    pub(crate) values: Vec<f64>,
    pub(crate) l_max: u64,
    pub(crate) tail: Option<GeometricTail>,
}

impl RlCurve {
    pub(crate) fn absorbed(l_max: u64) -> Self {
        Self {
            values: vec![0.0],
            l_max,
            tail: Some(GeometricTail {
                start: 1,
                ratio: 0.0,
                exit: 1.0,
            }),
        }
    }

    /// Horizon the curve was requested for.
    pub fn l_max(&self) -> u64 {
        self.l_max
    }

    /// Survival values p_1..p_{l_max}, extending the tail where needed.
    pub fn sf_values(&self) -> Vec<f64> {
        (1..=self.l_max)
            .map(|l| self.sf(l).unwrap_or(f64::NAN))
            .collect()
    }

    /// Values computed by the recursion itself (before tail extrapolation).
    pub fn computed(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> Option<GeometricTail> {
        self.tail
    }

    /// First index of the geometric regime; `l_max` when no tail was detected.
    pub fn tail_start(&self) -> u64 {
        self.tail.map_or(self.l_max, |t| t.start)
    }

    pub fn tail_ratio(&self) -> Option<f64> {
        self.tail.map(|t| t.ratio)
    }

    /// Whether successive ratios settled before `l_max`.
    pub fn converged(&self) -> bool {
        self.tail.is_some()
    }

    /// `P(L > l)`; `None` beyond the computed range when no tail is available.
    pub fn sf(&self, l: u64) -> Option<f64> {
        if l == 0 {
            return Some(1.0);
        }
        let k = self.values.len() as u64;
        if l <= k {
            return Some(self.values[(l - 1) as usize]);
        }
        let tail = self.tail?;
        let last = self.values[(tail.start - 1) as usize];
        if last == 0.0 {
            return Some(0.0);
        }
        let steps = (l - tail.start) as f64;
        Some(last * (steps * (-tail.exit).ln_1p()).exp())
    }

    pub fn cdf(&self, l: u64) -> Option<f64> {
        self.sf(l).map(|p| 1.0 - p)
    }

    /// `E(L) = Σ_{l≥0} p_l`, summing the geometric tail in closed form.
    pub fn arl(&self) -> Result<f64> {
        let tail = self.tail.ok_or_else(|| {
            Error::NoConvergence(format!(
                "no geometric tail detected within {} steps",
                self.l_max
            ))
        })?;
        if !(tail.exit > 0.0) || !tail.exit.is_finite() {
            return Err(Error::Divergence {
                ratio: tail.ratio,
                s2: None,
            });
        }
        let start = tail.start as usize;
        let head: f64 = 1.0 + self.values[..start].iter().sum::<f64>();
        let last = self.values[start - 1];
        let arl = head + last * (1.0 - tail.exit) / tail.exit;
        if !arl.is_finite() {
            return Err(Error::Divergence {
                ratio: tail.ratio,
                s2: None,
            });
        }
        Ok(arl)
    }

    /// Smallest `l` with `P(L ≤ l) ≥ alpha`, as a real number so that
    /// astronomically long quantiles do not overflow.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "quantile level must lie in (0,1), got {alpha}"
            )));
        }
        let target = 1.0 - alpha;
        if let Some(i) = self.values.iter().position(|&p| p <= target) {
            return Ok((i + 1) as f64);
        }
        let tail = self.tail.ok_or(Error::Saturated {
            alpha,
            cap: self.l_max,
        })?;
        if !(tail.exit > 0.0) {
            return Err(Error::Divergence {
                ratio: tail.ratio,
                s2: None,
            });
        }
        let last = self.values[(tail.start - 1) as usize];
        let log_step = (-tail.exit).ln_1p();
        let k = ((target / last).ln() / log_step).ceil().max(1.0);
        let start = tail.start as f64;
        if k < 1e15 {
            // settle rounding at the boundary
            let mut k = k as u64;
            let sf_at = |k: u64| last * ((k as f64) * log_step).exp();
            while k > 1 && sf_at(k - 1) <= target {
                k -= 1;
            }
            while sf_at(k) > target {
                k += 1;
            }
            Ok(start + k as f64)
        } else {
            Ok(start + k)
        }
    }
}
