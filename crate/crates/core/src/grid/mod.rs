//! Microgrid domain types, tariffs, exogenous traces and stage cost.

mod config;
mod cost;
mod state;
pub mod synth;
mod trace;

use thiserror::Error;

pub use config::{
    BatteryParams, Branch, DGParams, GridLinkParams, MicrogridConfig, PriceSchedule, PriceSegment,
    RenewableParams,
};
pub use cost::{cost_terms, reward, stage_cost, CostBreakdown};
pub use state::{BranchFlow, DispatchDecision, SystemState};
pub use trace::{
    load_traces, read_traces, ExogenousTrace, TraceRecord, CSV_HEADER, TIMESTAMP_FORMAT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("trace ingestion error at line {line}: {msg}")]
    Ingestion { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}
