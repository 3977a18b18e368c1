use thiserror::Error;

/// Errors raised by the run-length and design routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The run-length distribution has no geometric decay (tail ratio not below one).
    #[error("run length diverges: tail ratio {ratio}{}", fmt_node(*.s2))]
    Divergence { ratio: f64, s2: Option<f64> },

    #[error("infeasible design target: {0}")]
    Infeasible(String),

    #[error("residual is not monotone: {0}")]
    NonMonotone(String),

    #[error("cdf does not reach {alpha} before run length {cap}")]
    Saturated { alpha: f64, cap: u64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),
}

fn fmt_node(s2: Option<f64>) -> String {
    match s2 {
        Some(s) => format!(" at phase I node s2 = {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Attach the offending mixing node to a divergence error.
    pub(crate) fn at_node(self, node: f64) -> Self {
        match self {
            Error::Divergence { ratio, .. } => Error::Divergence {
                ratio,
                s2: Some(node),
            },
            other => other,
        }
    }

    /// Prefix the message of a text-carrying error.
    pub(crate) fn context(self, ctx: &str) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Infeasible(m) => Error::Infeasible(format!("{ctx}: {m}")),
            Error::NonMonotone(m) => Error::NonMonotone(format!("{ctx}: {m}")),
            Error::NoConvergence(m) => Error::NoConvergence(format!("{ctx}: {m}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
