//! Run-length distributions and control-limit design for EWMA S² charts
//! with an estimated in-control variance.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod cli;
pub mod conditional;
pub mod design;
pub mod error;
pub mod numerics;
mod roots;
pub mod simulate;
pub mod unconditional;

pub use chart::{ChartConfig, Limits, Sided};
pub use design::{DesignSolver, DesignTarget, TwoSidedDesign, TwoSidedVariant};
pub use error::{Error, Result};
pub use simulate::{EmpiricalRL, PhaseIMode, SimulationSpec};
pub use unconditional::{PhaseIConfig, UnconditionalRl};
