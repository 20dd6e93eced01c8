//! Episode simulator: exogenous trace + battery clamp + single-period OPF.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{
    BatteryParams, DispatchDecision, ExogenousTrace, GridError, MicrogridConfig, SystemState,
};
use crate::opf::{solve_opf, OpfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("step {t}: {source}")]
    Opf { t: usize, source: OpfError },
    #[error("{0}")]
    Input(String),
}

/// SoC after holding terminal power `p_b` (kW, positive = discharge) for `dt` hours.
pub fn soc_transition(bat: &BatteryParams, soc: f64, p_b: f64, dt: f64) -> f64 {
    soc + bat.soc_delta(p_b, dt)
}

/// Limits `p_b` so that the successor SoC stays inside the SoC bounds.
pub fn clamp_battery(bat: &BatteryParams, soc: f64, p_b: f64, dt: f64) -> f64 {
    let next = soc_transition(bat, soc, p_b, dt);
    if next > bat.soc_max {
        -bat.e_max * (bat.soc_max - soc).max(0.0) / (bat.eta_ch * dt)
    } else if next < bat.soc_min {
        (soc - bat.soc_min).max(0.0) * bat.e_max * bat.eta_dis / dt
    } else {
        p_b
    }
}

/// The discrete battery actions, in kW, charging negative.
pub fn action_space(bat: &BatteryParams) -> &[f64] {
    &bat.action_levels
}

/// Past-window exogenous series feeding the representation network, kW,
/// oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub pv: Vec<f64>,
    pub wt: Vec<f64>,
    pub load: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: SystemState,
    pub reward: f64,
    pub decision: DispatchDecision,
    /// Battery power actually executed after the clamp.
    pub p_b: f64,
    pub terminal: bool,
    pub dg_committed: bool,
}

/// One trace and plant; episodes are identified by their start row.
///
/// `step` is a pure function of its arguments, so one `Env` can serve any
/// number of episodes in sequence.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: MicrogridConfig,
    trace: Arc<ExogenousTrace>,
    start: usize,
}

impl Env {
    pub fn new(cfg: MicrogridConfig, trace: Arc<ExogenousTrace>) -> Result<Self, EnvError> {
        cfg.validate()?;
        if (trace.dt - cfg.dt).abs() > 1e-12 {
            return Err(EnvError::Input(format!(
                "trace step {} h differs from config dt {} h",
                trace.dt, cfg.dt
            )));
        }
        Ok(Env {
            cfg,
            trace,
            start: 0,
        })
    }

    pub fn cfg(&self) -> &MicrogridConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &Arc<ExogenousTrace> {
        &self.trace
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.cfg.horizon_t
    }

    /// Starts an episode at trace row `start` with the given SoC.
    pub fn reset(&mut self, start: usize, soc0: f64) -> Result<SystemState, EnvError> {
        let bat = &self.cfg.battery;
        if !(bat.soc_min..=bat.soc_max).contains(&soc0) {
            return Err(EnvError::Input(format!(
                "soc0 {soc0} outside [{}, {}]",
                bat.soc_min, bat.soc_max
            )));
        }
        if start + self.cfg.horizon_t > self.trace.len() {
            return Err(EnvError::Input(format!(
                "episode at row {start} needs {} rows, trace has {}",
                self.cfg.horizon_t,
                self.trace.len()
            )));
        }
        self.start = start;
        self.state_at(0, soc0)
    }

    /// State of episode step `t` with SoC `soc`. Rows past the trace end
    /// repeat the last row (only the terminal state can land there).
    pub fn state_at(&self, t: usize, soc: f64) -> Result<SystemState, EnvError> {
        let row = (self.start + t).min(self.trace.len() - 1);
        let r = &self.trace.records[row];
        let hour = self.trace.hour_of(row);
        let (p_buy, p_sell) = self.cfg.prices.price_at(hour)?;
        let load_p = self.cfg.bus_loads_p(r.load);
        let load_q = self.cfg.bus_loads_q(&load_p);
        Ok(SystemState {
            t,
            hour,
            soc,
            load_p,
            load_q,
            pv_avail: r.pv,
            wt_avail: r.wt,
            p_buy,
            p_sell,
        })
    }

    /// Exogenous states of steps `t..t+h` (SoC copied from `soc`), truncated
    /// at the episode end.
    pub fn forecast(&self, t: usize, soc: f64, h: usize) -> Result<Vec<SystemState>, EnvError> {
        (t..(t + h).min(self.cfg.horizon_t))
            .map(|k| self.state_at(k, soc))
            .collect()
    }

    /// The `history_window` rows before step `t`, padded at the start of
    /// the trace with its first row.
    pub fn history(&self, t: usize) -> History {
        let w = self.cfg.history_window;
        let row = self.start + t;
        let mut h = History {
            pv: Vec::with_capacity(w),
            wt: Vec::with_capacity(w),
            load: Vec::with_capacity(w),
        };
        for k in (1..=w).rev() {
            let r = &self.trace.records[row.saturating_sub(k).min(self.trace.len() - 1)];
            h.pv.push(r.pv);
            h.wt.push(r.wt);
            h.load.push(r.load);
        }
        h
    }

    /// Executes a battery action: clamp, OPF, reward, SoC update.
    pub fn step(&self, state: &SystemState, p_b_action: f64) -> Result<Transition, EnvError> {
        let bat = &self.cfg.battery;
        if !(p_b_action.is_finite()
            && p_b_action <= bat.p_dis_max + 1e-9
            && -p_b_action <= bat.p_ch_max + 1e-9)
        {
            return Err(EnvError::Input(format!(
                "battery action {p_b_action} kW outside the power limits"
            )));
        }
        if state.t >= self.cfg.horizon_t {
            return Err(EnvError::Input("step called on a terminal state".into()));
        }
        let dt = self.cfg.dt;
        let p_b = clamp_battery(bat, state.soc, p_b_action, dt);
        let r = solve_opf(&self.cfg, state, p_b)
            .map_err(|source| EnvError::Opf { t: state.t, source })?;
        let soc = soc_transition(bat, state.soc, p_b, dt).clamp(bat.soc_min, bat.soc_max);
        let next = self.state_at(state.t + 1, soc)?;
        Ok(Transition {
            terminal: next.t >= self.cfg.horizon_t,
            next,
            reward: -r.cost,
            decision: r.decision,
            p_b,
            dg_committed: r.dg_committed,
        })
    }
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;
    use proptest::prelude::*;

    use super::*;
    use crate::grid::{synth, Branch, TraceRecord};

    fn bat() -> BatteryParams {
        MicrogridConfig::default().battery
    }

    fn flat_trace(n: usize, load: f64, pv: f64) -> ExogenousTrace {
        let t0 = NaiveDate::from_ymd_opt(2024, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let records = (0..n)
            .map(|i| TraceRecord {
                timestamp: t0 + chrono::Duration::hours(i as i64),
                pv,
                wt: 0.0,
                load,
            })
            .collect();
        ExogenousTrace { records, dt: 1.0 }
    }

    #[test]
    fn transition_arithmetic() {
        let b = bat();
        assert!((soc_transition(&b, 0.5, -100.0, 1.0) - 0.69).abs() < 1e-12);
        assert!(
            (soc_transition(&b, 0.5, 100.0, 1.0) - (0.5 - 100.0 / (0.95 * 500.0))).abs() < 1e-12
        );
        assert!((soc_transition(&b, 0.5, 100.0, 1.0) - 0.28947).abs() < 1e-5);
        assert_eq!(soc_transition(&b, 0.5, 0.0, 1.0), 0.5);
    }

    #[test]
    fn clamp_branches() {
        let b = bat();
        assert!((clamp_battery(&b, 0.95, -100.0, 1.0) + 500.0 * 0.05 / 0.95).abs() < 1e-9);
        assert!((clamp_battery(&b, 0.95, -100.0, 1.0) + 26.3158).abs() < 1e-4);
        assert!((clamp_battery(&b, 0.25, 100.0, 1.0) - 23.75).abs() < 1e-9);
        assert_eq!(clamp_battery(&b, 0.5, 25.0, 1.0), 25.0);
    }

    #[test]
    fn actions() {
        let b = bat();
        assert_eq!(
            action_space(&b),
            &[-100.0, -75.0, -50.0, -25.0, 0.0, 25.0, 50.0, 75.0, 100.0]
        );
        assert_eq!(action_space(&b)[4], 0.0);
        let mut c = b.clone();
        c.action_levels = vec![-50.0, -25.0, 0.0, 25.0, 50.0];
        assert_eq!(action_space(&c), &[-50.0, -25.0, 0.0, 25.0, 50.0]);
    }

    #[test]
    fn reset_checks() {
        let cfg = MicrogridConfig::default();
        let mut env = Env::new(cfg, Arc::new(flat_trace(30, 50.0, 0.0))).unwrap();
        let s = env.reset(0, 0.5).unwrap();
        assert_eq!(s.p_buy, 0.12);
        assert_eq!(s.t, 0);
        assert!(matches!(env.reset(0, 0.1), Err(EnvError::Input(_))));
        assert!(matches!(env.reset(40, 0.5), Err(EnvError::Input(_))));
        assert!(matches!(env.reset(7, 0.5), Err(EnvError::Input(_))));
    }

    #[test]
    fn history_pads_with_first_row() {
        let mut tr = flat_trace(30, 50.0, 0.0);
        for (i, r) in tr.records.iter_mut().enumerate() {
            r.load = i as f64;
        }
        let mut env = Env::new(MicrogridConfig::default(), Arc::new(tr)).unwrap();
        env.reset(2, 0.5).unwrap();
        assert_eq!(env.history(0).load, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(env.history(5).load, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn idle_step_and_terminal_flag() {
        let cfg = MicrogridConfig::default();
        let mut env = Env::new(cfg, Arc::new(flat_trace(24, 0.0, 0.0))).unwrap();
        let mut s = env.reset(0, 0.5).unwrap();
        for t in 0..24 {
            let tr = env.step(&s, 0.0).unwrap();
            assert!(tr.reward.abs() < 1e-6, "{}", tr.reward);
            assert_eq!(tr.terminal, t == 23);
            s = tr.next;
        }
        assert!(env.step(&s, 0.0).is_err());
    }

    #[test]
    fn battery_serves_night_load() {
        let mut cfg = MicrogridConfig::default();
        cfg.buses = vec![1, 2];
        cfg.branches = vec![Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.0,
            x: 0.0,
        }];
        cfg.dg.bus = 2;
        cfg.battery.bus = 2;
        cfg.renewables.pv_bus = 2;
        cfg.renewables.wt_bus = 2;
        cfg.load_shares = vec![0.0, 1.0];
        let mut env = Env::new(cfg, Arc::new(flat_trace(48, 50.0, 0.0))).unwrap();
        let s = env.reset(23, 0.5).unwrap();
        assert_eq!(s.hour, 23.0);
        let tr = env.step(&s, 50.0).unwrap();
        assert!((tr.reward + 5.263).abs() < 1e-3, "{}", tr.reward);
        assert!((tr.next.soc - soc_transition(&bat(), 0.5, 50.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn infeasible_state_reports_step() {
        let cfg = MicrogridConfig::default();
        let mut env = Env::new(cfg, Arc::new(flat_trace(24, 900.0, 0.0))).unwrap();
        let s = env.reset(0, 0.5).unwrap();
        assert!(matches!(env.step(&s, 0.0), Err(EnvError::Opf { t: 0, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn clamp_keeps_soc_and_is_idempotent(soc in 0.2f64..=1.0, a in 0usize..9) {
            let b = bat();
            let p = clamp_battery(&b, soc, b.action_levels[a], 1.0);
            let next = soc_transition(&b, soc, p, 1.0);
            prop_assert!(next >= b.soc_min - 1e-9 && next <= b.soc_max + 1e-9);
            prop_assert_eq!(clamp_battery(&b, soc, p, 1.0), p);
        }

        #[test]
        fn round_trip_efficiency(x in 1.0f64..200.0) {
            let b = bat();
            // charge x kWh at the terminals, then discharge back to the start
            let up = soc_transition(&b, 0.3, -x, 1.0);
            let back = (up - 0.3) * b.eta_dis * b.e_max;
            prop_assert!((back - 0.9025 * x).abs() < 1e-9 * x);
            prop_assert!((soc_transition(&b, up, back, 1.0) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn episode_soc_stays_in_bounds_and_is_deterministic() {
        let cfg = MicrogridConfig::default();
        let trace = synth::generate(2, 7, &synth::SynthParams::default());
        let mut env = Env::new(cfg, Arc::new(trace)).unwrap();
        let mut s = env.reset(24, 0.5).unwrap();
        let plan = [-100.0, -100.0, -100.0, 100.0, 100.0, 100.0, 100.0, 100.0];
        for t in 0..24 {
            let a = plan[t % plan.len()];
            let tr = env.step(&s, a).unwrap();
            let again = env.step(&s, a).unwrap();
            assert_eq!(tr.reward.to_bits(), again.reward.to_bits());
            assert!(tr.next.soc >= 0.2 - 1e-9 && tr.next.soc <= 1.0 + 1e-9);
            s = tr.next;
        }
    }
}
