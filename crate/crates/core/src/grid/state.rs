use serde::{Deserialize, Serialize};

/// Observation of the plant at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Step index within the episode.
    pub t: usize,
    /// Clock time in hours (used for the tariff).
    pub hour: f64,
    pub soc: f64,
    /// Per-bus loads in kW / kvar, aligned with `MicrogridConfig::buses`.
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    pub pv_avail: f64,
    pub wt_avail: f64,
    pub p_buy: f64,
    pub p_sell: f64,
}

impl SystemState {
    pub fn total_load_p(&self) -> f64 {
        self.load_p.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchFlow {
    /// Index (into `MicrogridConfig::buses`) of the sending bus.
    pub from: usize,
    /// Sending-end active power, kW.
    pub p: f64,
    /// Sending-end reactive power, kvar.
    pub q: f64,
    /// Squared current magnitude, per-unit.
    pub l: f64,
}

/// Dispatch of every device for one step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub dg_p: f64,
    pub dg_q: f64,
    /// Battery terminal power, positive = discharge.
    pub bat_p: f64,
    pub bat_q: f64,
    pub pv_p: f64,
    pub pv_q: f64,
    pub wt_p: f64,
    pub wt_q: f64,
    pub grid_buy_p: f64,
    pub grid_sell_p: f64,
    pub grid_q: f64,
    /// Per-branch flows aligned with `MicrogridConfig::branches`.
    pub flows: Vec<BranchFlow>,
    /// Squared voltage magnitude per bus, per-unit.
    pub voltages: Vec<f64>,
    /// Power base (kVA) that converts `flows` to per-unit.
    pub s_base: f64,
}
