//! Chart model: EWMA recursion on subgroup variances and its alarm limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side(s) of the in-control variance the chart watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    /// Alarm when `Z_i > c_u`.
    Upper,
    /// Alarm when `Z_i > c_u` or `Z_i < c_l`.
    #[serde(rename = "two")]
    TwoSided,
}

impl std::str::FromStr for Sided {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Sided::Upper),
            "two" | "two-sided" | "twosided" => Ok(Sided::TwoSided),
            other => Err(Error::domain(format!("unknown chart side '{other}'"))),
        }
    }
}

impl std::fmt::Display for Sided {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sided::Upper => "upper",
            Sided::TwoSided => "two",
        })
    }
}

/// Shape of an EWMA S² chart.
///
/// `Z_i = (1 − λ) Z_{i−1} + λ S_i²` with `Z_0 = z0`, where `S_i²` is the sample
/// variance of subgroup `i` (size `n`). With `lambda = 1` this is the Shewhart S² chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartConfig {
    pub lambda: f64,
    pub n: u32,
    pub sided: Sided,
    /// Head start; 1 for standardized data.
    pub z0: f64,
}

impl ChartConfig {
    pub fn new(lambda: f64, n: u32, sided: Sided) -> Result<Self> {
        Self::with_head_start(lambda, n, sided, 1.0)
    }

    pub fn upper(lambda: f64, n: u32) -> Result<Self> {
        Self::new(lambda, n, Sided::Upper)
    }

    pub fn two_sided(lambda: f64, n: u32) -> Result<Self> {
        Self::new(lambda, n, Sided::TwoSided)
    }

    pub fn with_head_start(lambda: f64, n: u32, sided: Sided, z0: f64) -> Result<Self> {
        let cfg = Self {
            lambda,
            n,
            sided,
            z0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::domain(format!(
                "smoothing constant must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.n < 2 {
            return Err(Error::domain(format!(
                "subgroup size must be at least 2, got {}",
                self.n
            )));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::domain(format!(
                "head start must be positive, got {}",
                self.z0
            )));
        }
        Ok(())
    }

    /// Degrees of freedom of each subgroup variance.
    pub fn df(&self) -> u32 {
        self.n - 1
    }
}

/// Control limits. `lower` is `None` for an upper chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub lower: Option<f64>,
    pub upper: f64,
}

impl Limits {
    pub fn upper(c_u: f64) -> Self {
        Self {
            lower: None,
            upper: c_u,
        }
    }

    pub fn two_sided(c_l: f64, c_u: f64) -> Self {
        Self {
            lower: Some(c_l),
            upper: c_u,
        }
    }

    /// Lower end of the continuation region (0 for an upper chart).
    pub fn lower_or_zero(&self) -> f64 {
        self.lower.unwrap_or(0.0)
    }

    /// Check the limits against a chart: `0 ≤ c_l < z0 < c_u`, lower limit iff two-sided.
    pub fn validate_for(&self, config: &ChartConfig) -> Result<()> {
        if !(self.upper.is_finite() && self.upper > 0.0) {
            return Err(Error::domain(format!(
                "upper limit must be positive, got {}",
                self.upper
            )));
        }
        match (config.sided, self.lower) {
            (Sided::Upper, Some(_)) => Err(Error::domain("upper chart takes no lower limit")),
            (Sided::TwoSided, None) => Err(Error::domain("two-sided chart needs a lower limit")),
            (Sided::TwoSided, Some(c_l)) => {
                if !(c_l >= 0.0 && c_l < config.z0 && config.z0 < self.upper) {
                    Err(Error::domain(format!(
                        "two-sided limits must satisfy 0 <= c_l < z0 < c_u, got ({c_l}, {}) with z0 = {}",
                        self.upper, config.z0
                    )))
                } else {
                    Ok(())
                }
            }
            (Sided::Upper, None) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_domain() {
        assert!(ChartConfig::upper(0.0, 5).is_err());
        assert!(ChartConfig::upper(1.2, 5).is_err());
        assert!(ChartConfig::upper(1.0, 5).is_ok());
        assert!(ChartConfig::upper(0.1, 1).is_err());
        assert!(ChartConfig::with_head_start(0.1, 5, Sided::Upper, 0.0).is_err());
        assert_eq!(ChartConfig::upper(0.1, 5).unwrap().df(), 4);
    }

    #[test]
    fn limits_must_match_sides() {
        let up = ChartConfig::upper(0.1, 5).unwrap();
        let two = ChartConfig::two_sided(0.1, 5).unwrap();
        assert!(Limits::upper(1.5).validate_for(&up).is_ok());
        assert!(Limits::two_sided(0.5, 1.5).validate_for(&up).is_err());
        assert!(Limits::upper(1.5).validate_for(&two).is_err());
        assert!(Limits::two_sided(0.5, 1.5).validate_for(&two).is_ok());
        assert!(Limits::two_sided(1.1, 1.5).validate_for(&two).is_err());
        assert!(Limits::two_sided(-0.1, 1.5).validate_for(&two).is_err());
    }

    #[test]
    fn sided_parse() {
        assert_eq!("upper".parse::<Sided>().unwrap(), Sided::Upper);
        assert_eq!("two".parse::<Sided>().unwrap(), Sided::TwoSided);
        assert!("left".parse::<Sided>().is_err());
    }
}
