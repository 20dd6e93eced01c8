//! Plant description: topology, device limits, cost coefficients and tariffs.

use serde::{Deserialize, Serialize};

use super::GridError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Resistance in ohm.
    pub r: f64,
    /// Reactance in ohm.
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DGParams {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub s_max: f64,
    /// $/kW^2h
    pub alpha: f64,
    /// $/kWh
    pub beta: f64,
    /// $/h while committed
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub bus: usize,
    pub e_max: f64,
    pub p_ch_max: f64,
    pub p_dis_max: f64,
    pub s_max: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Degradation coefficient, $/kWh of capacity per unit |dSoC|.
    pub rho_e: f64,
    /// Discrete battery powers in kW, positive = discharge.
    pub action_levels: Vec<f64>,
}

impl BatteryParams {
    /// SoC change caused by terminal power `p_b` held for `dt` hours.
    pub fn soc_delta(&self, p_b: f64, dt: f64) -> f64 {
        if p_b < 0.0 {
            self.eta_ch * (-p_b) * dt / self.e_max
        } else {
            -p_b * dt / (self.eta_dis * self.e_max)
        }
    }

    /// Degradation cost `rho_e * e_max * |dSoC|` of one step.
    pub fn degradation_cost(&self, p_b: f64, dt: f64) -> f64 {
        self.rho_e * self.e_max * self.soc_delta(p_b, dt).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableParams {
    pub pv_bus: usize,
    pub wt_bus: usize,
    pub pv_s_max: f64,
    pub wt_s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLinkParams {
    /// Point of common coupling; also the root of the radial tree.
    pub bus: usize,
    pub p_buy_max: f64,
    pub p_sell_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Voltage magnitude held at the coupling bus, per-unit.
    pub v_pcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSegment {
    pub start_hour: f64,
    /// Exclusive; a segment with `end_hour <= start_hour` wraps past midnight.
    pub end_hour: f64,
    pub p_buy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub segments: Vec<PriceSegment>,
    pub sell_ratio: f64,
}

impl PriceSchedule {
    /// Time-of-use tariff of the reference system.
    pub fn reference() -> Self {
        let seg = |start_hour, end_hour, p_buy| PriceSegment {
            start_hour,
            end_hour,
            p_buy,
        };
        PriceSchedule {
            segments: vec![
                seg(8.0, 14.0, 0.28),
                seg(14.0, 20.0, 0.48),
                seg(20.0, 22.0, 0.28),
                seg(22.0, 8.0, 0.12),
            ],
            sell_ratio: 0.5,
        }
    }

    /// `(p_buy, p_sell)` at clock time `hour`, wrapped into [0, 24).
    pub fn price_at(&self, hour: f64) -> Result<(f64, f64), GridError> {
        let h = hour.rem_euclid(24.0);
        for s in &self.segments {
            let inside = if s.start_hour < s.end_hour {
                h >= s.start_hour && h < s.end_hour
            } else {
                h >= s.start_hour || h < s.end_hour
            };
            if inside {
                return Ok((s.p_buy, self.sell_ratio * s.p_buy));
            }
        }
        Err(GridError::Config(format!(
            "prices: hour {h} not covered by any segment"
        )))
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(0.0..=1.0).contains(&self.sell_ratio) {
            return Err(GridError::Config(
                "prices.sell_ratio must lie in [0, 1]".into(),
            ));
        }
        let mut pieces = Vec::new();
        for (k, s) in self.segments.iter().enumerate() {
            let ok = (0.0..=24.0).contains(&s.start_hour) && (0.0..=24.0).contains(&s.end_hour);
            if !ok || s.p_buy < 0.0 || !s.p_buy.is_finite() {
                return Err(GridError::Config(format!(
                    "prices.segments[{k}] out of range"
                )));
            }
            if s.start_hour < s.end_hour {
                pieces.push((s.start_hour, s.end_hour));
            } else {
                pieces.push((s.start_hour, 24.0));
                pieces.push((0.0, s.end_hour));
            }
        }
        pieces.retain(|p| p.1 > p.0);
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut at = 0.0;
        for (a, b) in pieces {
            if a != at {
                return Err(GridError::Config(format!(
                    "prices.segments must cover [0,24) without overlap (problem near hour {at})"
                )));
            }
            at = b;
        }
        if at != 24.0 {
            return Err(GridError::Config(format!(
                "prices.segments leave [{at}, 24) uncovered"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridConfig {
    pub buses: Vec<usize>,
    pub branches: Vec<Branch>,
    pub dg: DGParams,
    pub battery: BatteryParams,
    pub renewables: RenewableParams,
    pub grid_link: GridLinkParams,
    pub prices: PriceSchedule,
    /// Fraction of total active load at each bus, aligned with `buses`.
    pub load_shares: Vec<f64>,
    pub load_power_factor: f64,
    /// Voltage magnitude bounds (v_min, v_max), per-unit.
    pub voltage_bounds: (f64, f64),
    /// (S_base kVA, V_base V).
    pub bases: (f64, f64),
    /// Step length in hours.
    pub dt: f64,
    pub horizon_t: usize,
    /// Curtailment cost, $/kWh.
    pub p_cur: f64,
    /// Past steps fed to the representation network.
    pub history_window: usize,
}

impl Default for MicrogridConfig {
    /// The six-bus residential microgrid used throughout the evaluation.
    fn default() -> Self {
        let br = |from_bus, to_bus, r: f64, x: f64| Branch {
            from_bus,
            to_bus,
            r: r * 1e-2,
            x: x * 1e-2,
        };
        MicrogridConfig {
            buses: vec![1, 2, 3, 4, 5, 6],
            branches: vec![
                br(1, 2, 0.922, 0.470),
                br(1, 3, 4.930, 2.511),
                br(1, 4, 3.660, 1.864),
                br(4, 5, 3.811, 1.941),
                br(4, 6, 1.872, 6.188),
            ],
            dg: DGParams {
                bus: 6,
                p_min: 10.0,
                p_max: 30.0,
                s_max: 35.0,
                alpha: 1.04,
                beta: 0.03,
                c: 1.3,
            },
            battery: BatteryParams {
                bus: 3,
                e_max: 500.0,
                p_ch_max: 100.0,
                p_dis_max: 100.0,
                s_max: 100.0,
                eta_ch: 0.95,
                eta_dis: 0.95,
                soc_min: 0.2,
                soc_max: 1.0,
                rho_e: 0.1,
                action_levels: vec![-100.0, -75.0, -50.0, -25.0, 0.0, 25.0, 50.0, 75.0, 100.0],
            },
            renewables: RenewableParams {
                pv_bus: 2,
                wt_bus: 5,
                pv_s_max: 100.0,
                wt_s_max: 100.0,
            },
            grid_link: GridLinkParams {
                bus: 1,
                p_buy_max: 500.0,
                p_sell_max: 500.0,
                q_min: 0.0,
                q_max: 100.0,
                v_pcc: 1.0,
            },
            prices: PriceSchedule::reference(),
            load_shares: vec![0.0, 0.2, 0.1, 0.3, 0.2, 0.2],
            load_power_factor: 0.95,
            voltage_bounds: (0.95, 1.05),
            bases: (100.0, 400.0),
            dt: 1.0,
            horizon_t: 24,
            p_cur: 0.10,
            history_window: 6,
        }
    }
}

impl MicrogridConfig {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: usize) -> Result<usize, GridError> {
        self.buses
            .iter()
            .position(|&b| b == id)
            .ok_or_else(|| GridError::Config(format!("unknown bus id {id}")))
    }

    /// Base impedance in ohm.
    pub fn z_base(&self) -> f64 {
        let (s_kva, v) = self.bases;
        v * v / (s_kva * 1e3)
    }

    /// Per-bus active loads for a total demand.
    pub fn bus_loads_p(&self, total_p: f64) -> Vec<f64> {
        self.load_shares.iter().map(|s| s * total_p).collect()
    }

    /// Reactive loads at the configured lagging power factor.
    pub fn bus_loads_q(&self, load_p: &[f64]) -> Vec<f64> {
        let pf = self.load_power_factor;
        let tan = (1.0 - pf * pf).sqrt() / pf;
        load_p.iter().map(|p| p * tan).collect()
    }

    /// Parent branch index of every bus (None for the root).
    pub fn parent_branch(&self) -> Result<Vec<Option<usize>>, GridError> {
        let mut parent = vec![None; self.n_buses()];
        for (k, b) in self.branches.iter().enumerate() {
            let j = self.bus_index(b.to_bus)?;
            if parent[j].is_some() {
                return Err(GridError::Config(format!(
                    "bus {} has two parent branches",
                    b.to_bus
                )));
            }
            parent[j] = Some(k);
        }
        Ok(parent)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let cfg = |m: String| Err(GridError::Config(m));
        let n = self.n_buses();
        if n == 0 {
            return cfg("buses must not be empty".into());
        }
        if self.load_shares.len() != n {
            return cfg(format!(
                "load_shares has {} entries for {n} buses",
                self.load_shares.len()
            ));
        }
        if self.load_shares.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return cfg("load_shares entries must lie in [0, 1]".into());
        }
        let total: f64 = self.load_shares.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return cfg(format!("load_shares sum to {total}, expected 1"));
        }
        if !(self.dt > 0.0) {
            return cfg("dt must be positive".into());
        }
        if self.horizon_t == 0 {
            return cfg("horizon_t must be at least 1".into());
        }
        let (vmin, vmax) = self.voltage_bounds;
        if !(0.0 < vmin && vmin < vmax) {
            return cfg("voltage_bounds must satisfy 0 < v_min < v_max".into());
        }
        if !(self.bases.0 > 0.0 && self.bases.1 > 0.0) {
            return cfg("bases must be positive".into());
        }
        if !(self.load_power_factor > 0.0 && self.load_power_factor <= 1.0) {
            return cfg("load_power_factor must lie in (0, 1]".into());
        }
        if self.p_cur < 0.0 {
            return cfg("p_cur must be non-negative".into());
        }
        for (k, b) in self.branches.iter().enumerate() {
            if b.r < 0.0 {
                return cfg(format!("branches[{k}].r must be non-negative"));
            }
            self.bus_index(b.from_bus)?;
            self.bus_index(b.to_bus)?;
        }
        // radial tree rooted at the coupling bus
        let root = self.bus_index(self.grid_link.bus)?;
        if self.branches.len() != n - 1 {
            return cfg(format!(
                "{} branches cannot form a tree over {n} buses",
                self.branches.len()
            ));
        }
        let parent = self.parent_branch()?;
        if parent[root].is_some() {
            return cfg("the coupling bus must be the root of the feeder".into());
        }
        for start in 0..n {
            let mut at = start;
            let mut hops = 0;
            while let Some(k) = parent[at] {
                at = self.bus_index(self.branches[k].from_bus)?;
                hops += 1;
                if hops > n {
                    return cfg("branches contain a cycle".into());
                }
            }
            if at != root {
                return cfg(format!(
                    "bus {} is not connected to the coupling bus",
                    self.buses[start]
                ));
            }
        }
        let dg = &self.dg;
        if !(0.0 <= dg.p_min && dg.p_min <= dg.p_max && dg.p_max <= dg.s_max) {
            return cfg("dg limits must satisfy 0 <= p_min <= p_max <= s_max".into());
        }
        if dg.alpha < 0.0 {
            return cfg("dg.alpha must be non-negative".into());
        }
        self.bus_index(dg.bus)?;
        let b = &self.battery;
        self.bus_index(b.bus)?;
        if !(0.0 <= b.soc_min && b.soc_min < b.soc_max && b.soc_max <= 1.0) {
            return cfg("battery SoC limits must satisfy 0 <= soc_min < soc_max <= 1".into());
        }
        let eff = |e: f64| e > 0.0 && e <= 1.0;
        if !(eff(b.eta_ch) && eff(b.eta_dis)) {
            return cfg("battery efficiencies must lie in (0, 1]".into());
        }
        if !(b.e_max > 0.0) {
            return cfg("battery.e_max must be positive".into());
        }
        if !b.action_levels.contains(&0.0) {
            return cfg("battery.action_levels must contain 0".into());
        }
        let mut sorted = b.action_levels.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted != b.action_levels {
            return cfg("battery.action_levels must be ordered".into());
        }
        let symmetric = sorted
            .iter()
            .zip(sorted.iter().rev())
            .all(|(a, z)| (a + z).abs() < 1e-12);
        if !symmetric {
            return cfg("battery.action_levels must be symmetric about 0".into());
        }
        if sorted
            .iter()
            .any(|&p| p < -b.p_ch_max - 1e-12 || p > b.p_dis_max + 1e-12)
        {
            return cfg("battery.action_levels exceed the power limits".into());
        }
        self.bus_index(self.renewables.pv_bus)?;
        self.bus_index(self.renewables.wt_bus)?;
        let g = &self.grid_link;
        if g.q_min > g.q_max || g.p_buy_max < 0.0 || g.p_sell_max < 0.0 {
            return cfg("grid_link limits are inconsistent".into());
        }
        if self.history_window == 0 {
            return cfg("history_window must be at least 1".into());
        }
        self.prices.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_prices() {
        let p = PriceSchedule::reference();
        assert_eq!(p.price_at(9.0).unwrap(), (0.28, 0.14));
        assert_eq!(p.price_at(23.0).unwrap(), (0.12, 0.06));
        assert_eq!(p.price_at(15.0).unwrap(), (0.48, 0.24));
        assert_eq!(p.price_at(24.0 + 15.0).unwrap(), (0.48, 0.24));
        for h in 0..24 {
            let (b, s) = p.price_at(h as f64).unwrap();
            assert_eq!(s, 0.5 * b);
        }
    }

    #[test]
    fn uncovered_hour_is_a_config_error() {
        let mut p = PriceSchedule::reference();
        p.segments.pop();
        assert!(p.validate().is_err());
        assert!(matches!(p.price_at(3.0), Err(GridError::Config(_))));
    }

    #[test]
    fn overlapping_segments_rejected() {
        let mut p = PriceSchedule::reference();
        p.segments[0].end_hour = 15.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        let c = MicrogridConfig::default();
        c.validate().unwrap();
        assert!((c.z_base() - 1.6).abs() < 1e-12);
        let loads = c.bus_loads_p(123.4);
        assert!((loads.iter().sum::<f64>() - 123.4).abs() < 1e-9);
    }

    #[test]
    fn cyclic_or_disconnected_topology_rejected() {
        let mut c = MicrogridConfig::default();
        c.branches[3].from_bus = 6;
        c.branches[4].from_bus = 5;
        assert!(c.validate().is_err());
        let mut c = MicrogridConfig::default();
        c.load_shares[1] = 0.3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn degradation_units() {
        let b = MicrogridConfig::default().battery;
        assert!(
            (b.degradation_cost(50.0, 1.0) - 0.1 * 500.0 * (50.0 / (0.95 * 500.0))).abs() < 1e-12
        );
        assert!((b.degradation_cost(-100.0, 1.0) - 0.1 * 0.95 * 100.0).abs() < 1e-12);
    }
}
