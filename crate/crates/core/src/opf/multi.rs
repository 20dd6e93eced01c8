//! Multi-period OPF with a continuous battery schedule (MPC and planning).

use crate::conic::{solve, ConicProgram, SolveStatus};
use crate::grid::{DispatchDecision, MicrogridConfig, SystemState};

use super::network::{add_period, extract, DgMode, PeriodInput, PeriodVars};
use super::{OpfError, OPF_TOL};

#[derive(Debug, Clone)]
pub struct MultiPeriodProgram {
    pub program: ConicProgram<f64>,
    periods: Vec<PeriodVars>,
    p_ch: Vec<usize>,
    p_dis: Vec<usize>,
    soc: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPeriodPlan {
    /// Planned objective in dollars (throughput-linear degradation).
    pub objective: f64,
    pub p_ch: Vec<f64>,
    pub p_dis: Vec<f64>,
    /// SoC at the end of every period.
    pub soc: Vec<f64>,
    pub decisions: Vec<DispatchDecision>,
}

impl MultiPeriodPlan {
    /// Net battery power of period `t`, positive = discharge.
    pub fn battery_power(&self, t: usize) -> f64 {
        self.p_dis[t] - self.p_ch[t]
    }
}

/// `h`-period program over `forecasts` (SoC fields ignored) from `soc0`.
///
/// Charge and discharge powers are separate non-negative variables whose
/// complementarity is left to the cost structure; the diesel unit uses the
/// perspective relaxation of its on/off decision.
pub fn build_multi_period(
    cfg: &MicrogridConfig,
    soc0: f64,
    forecasts: &[SystemState],
    h: usize,
) -> Result<MultiPeriodProgram, OpfError> {
    if h == 0 || forecasts.len() < h {
        return Err(OpfError::Input(format!(
            "horizon {h} needs at least that many forecast steps (got {})",
            forecasts.len()
        )));
    }
    let bat = &cfg.battery;
    let s = cfg.bases.0;
    let dt = cfg.dt;
    let mut prog = ConicProgram::new(0);
    let mut periods = Vec::with_capacity(h);
    let (mut p_ch, mut p_dis, mut soc) = (Vec::new(), Vec::new(), Vec::new());
    let soc_start = prog.add_var(soc0, soc0, 0.0);
    let mut prev = soc_start;
    let deg_ch = bat.rho_e * bat.eta_ch * dt * s;
    let deg_dis = bat.rho_e * dt * s / bat.eta_dis;
    for f in forecasts.iter().take(h) {
        let ch = prog.add_var(0.0, bat.p_ch_max / s, deg_ch);
        let dis = prog.add_var(0.0, bat.p_dis_max / s, deg_dis);
        let bat_p = prog.add_free_var();
        prog.add_eq(vec![(bat_p, 1.0), (dis, -1.0), (ch, 1.0)], 0.0);
        let next = prog.add_var(bat.soc_min, bat.soc_max, 0.0);
        let k = s * dt / bat.e_max;
        prog.add_eq(
            vec![
                (next, 1.0),
                (prev, -1.0),
                (ch, -bat.eta_ch * k),
                (dis, k / bat.eta_dis),
            ],
            0.0,
        );
        let input = PeriodInput {
            load_p: &f.load_p,
            load_q: &f.load_q,
            pv_avail: f.pv_avail,
            wt_avail: f.wt_avail,
            p_buy: f.p_buy,
            p_sell: f.p_sell,
        };
        periods.push(add_period(
            &mut prog,
            cfg,
            &input,
            bat_p,
            None,
            DgMode::Relaxed,
        ));
        p_ch.push(ch);
        p_dis.push(dis);
        soc.push(next);
        prev = next;
    }
    Ok(MultiPeriodProgram {
        program: prog,
        periods,
        p_ch,
        p_dis,
        soc,
    })
}

pub fn solve_multi_period(
    cfg: &MicrogridConfig,
    built: &MultiPeriodProgram,
) -> Result<MultiPeriodPlan, OpfError> {
    let sol = solve(&built.program, OPF_TOL, 100)?;
    if sol.status != SolveStatus::Optimal {
        return Err(match sol.status {
            SolveStatus::Infeasible => OpfError::Infeasible {
                family: super::LimitFamily::VoltageOrFlow,
                detail: "multi-period program infeasible".into(),
            },
            status => OpfError::Solver {
                status,
                detail: format!(
                    "residuals: primal {:.3e}, dual {:.3e}, gap {:.3e}",
                    sol.primal_residual, sol.dual_residual, sol.duality_gap
                ),
            },
        });
    }
    let s = cfg.bases.0;
    let x = &sol.x;
    for (t, (&c, &d)) in built.p_ch.iter().zip(&built.p_dis).enumerate() {
        let both = x[c] * s * x[d] * s;
        if both > 1e-6 {
            return Err(OpfError::Solver {
                status: sol.status,
                detail: format!(
                    "period {t} charges and discharges at once (product {both:.3e} kW^2)"
                ),
            });
        }
    }
    Ok(MultiPeriodPlan {
        objective: sol.objective_value,
        p_ch: built.p_ch.iter().map(|&i| x[i] * s).collect(),
        p_dis: built.p_dis.iter().map(|&i| x[i] * s).collect(),
        soc: built.soc.iter().map(|&i| x[i]).collect(),
        decisions: built.periods.iter().map(|v| extract(cfg, v, x)).collect(),
    })
}
