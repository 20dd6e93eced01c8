//! Second-order-cone relaxation of the branch-flow optimal power flow.
//!
//! All programs are built in per-unit on the configured bases and carry an
//! objective in dollars, so `objective_value` is directly comparable with
//! [`crate::grid::stage_cost`].

mod multi;
mod network;
mod single;

use thiserror::Error;

use crate::conic::{ConicError, SolveStatus};
use crate::grid::DispatchDecision;

pub use multi::{build_multi_period, solve_multi_period, MultiPeriodPlan, MultiPeriodProgram};
pub use single::{
    build_single_period, build_single_period_with, solve_opf, DgCommitment, OpfResult,
    SinglePeriodProgram,
};

/// Solver tolerance used for every OPF program.
pub const OPF_TOL: f64 = 1e-9;

/// Which group of limits makes a period infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitFamily {
    BatteryLimits,
    ActiveCapacity,
    ExportCapacity,
    ReactiveCapacity,
    VoltageOrFlow,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpfError {
    #[error("infeasible ({family:?}): {detail}")]
    Infeasible { family: LimitFamily, detail: String },
    #[error("solver stopped with {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("invalid input: {0}")]
    Input(String),
}

/// Per-branch gap `|(P^2 + Q^2) / v_i - l|` of a dispatch, per-unit.
///
/// Zero means the cone constraint is tight, i.e. the relaxed solution is a
/// physical power flow.
pub fn relaxation_gap(d: &DispatchDecision) -> Result<Vec<f64>, OpfError> {
    d.flows
        .iter()
        .map(|f| {
            let v = *d.voltages.get(f.from).ok_or_else(|| {
                OpfError::Input(format!(
                    "flow references bus index {} without a voltage",
                    f.from
                ))
            })?;
            if !(v > 0.0) {
                return Err(OpfError::Input(format!(
                    "non-positive squared voltage {v} at bus index {}",
                    f.from
                )));
            }
            let (p, q) = (f.p / d.s_base, f.q / d.s_base);
            Ok(((p * p + q * q) / v - f.l).abs())
        })
        .collect()
}

/// Largest entry of [`relaxation_gap`], zero for a network without branches.
pub fn max_relaxation_gap(d: &DispatchDecision) -> Result<f64, OpfError> {
    Ok(relaxation_gap(d)?.into_iter().fold(0.0, f64::max))
}
