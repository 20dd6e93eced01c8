use serde::{Deserialize, Serialize};

use super::{DispatchDecision, MicrogridConfig, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub dg: f64,
    pub grid: f64,
    pub battery: f64,
    pub curtailment: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.dg + self.grid + self.battery + self.curtailment
    }
}

/// The four cost terms of one step, in dollars.
pub fn cost_terms(
    cfg: &MicrogridConfig,
    state: &SystemState,
    d: &DispatchDecision,
) -> CostBreakdown {
    let dt = cfg.dt;
    let g = &cfg.dg;
    let dg = if d.dg_p > 0.0 {
        (g.alpha * d.dg_p * d.dg_p + g.beta * d.dg_p + g.c) * dt
    } else {
        0.0
    };
    let grid = (state.p_buy * d.grid_buy_p - state.p_sell * d.grid_sell_p) * dt;
    let battery = cfg.battery.degradation_cost(d.bat_p, dt);
    let spilled = (state.pv_avail + state.wt_avail - d.pv_p - d.wt_p).max(0.0);
    let curtailment = cfg.p_cur * spilled * dt;
    CostBreakdown {
        dg,
        grid,
        battery,
        curtailment,
    }
}

pub fn stage_cost(cfg: &MicrogridConfig, state: &SystemState, d: &DispatchDecision) -> f64 {
    cost_terms(cfg, state, d).total()
}

pub fn reward(cfg: &MicrogridConfig, state: &SystemState, d: &DispatchDecision) -> f64 {
    -stage_cost(cfg, state, d)
}
