//! Single-period OPF with the battery power fixed.

use crate::conic::{solve, ConicProgram, ConicSolution, SolveStatus};
use crate::grid::{cost_terms, CostBreakdown, DispatchDecision, MicrogridConfig, SystemState};

use super::network::{add_period, extract, DgMode, PeriodInput, PeriodVars};
use super::{LimitFamily, OpfError, OPF_TOL};

/// Whether the diesel unit is modelled as off or committed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgCommitment {
    Off,
    On,
}

/// A built single-period program together with its variable map.
#[derive(Debug, Clone)]
pub struct SinglePeriodProgram {
    pub program: ConicProgram<f64>,
    pub(crate) vars: PeriodVars,
}

impl SinglePeriodProgram {
    pub fn decision(&self, cfg: &MicrogridConfig, x: &[f64]) -> DispatchDecision {
        extract(cfg, &self.vars, x)
    }
}

/// The OPF program for one commitment of the diesel unit.
///
/// The objective is the stage cost in dollars, including the (constant)
/// degradation term of the fixed battery power.
pub fn build_single_period_with(
    cfg: &MicrogridConfig,
    state: &SystemState,
    p_b_fixed: f64,
    commitment: DgCommitment,
) -> SinglePeriodProgram {
    let mut prog = ConicProgram::new(0);
    let pb = p_b_fixed / cfg.bases.0;
    let bat_p = prog.add_var(pb, pb, 0.0);
    let input = PeriodInput {
        load_p: &state.load_p,
        load_q: &state.load_q,
        pv_avail: state.pv_avail,
        wt_avail: state.wt_avail,
        p_buy: state.p_buy,
        p_sell: state.p_sell,
    };
    let mode = match commitment {
        DgCommitment::Off => DgMode::Off,
        DgCommitment::On => DgMode::On,
    };
    let vars = add_period(&mut prog, cfg, &input, bat_p, Some(p_b_fixed), mode);
    prog.offset += cfg.battery.degradation_cost(p_b_fixed, cfg.dt);
    SinglePeriodProgram {
        program: prog,
        vars,
    }
}

/// The OPF program with the diesel unit off (the commitment most steps use).
pub fn build_single_period(
    cfg: &MicrogridConfig,
    state: &SystemState,
    p_b_fixed: f64,
) -> ConicProgram<f64> {
    build_single_period_with(cfg, state, p_b_fixed, DgCommitment::Off).program
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfResult {
    pub decision: DispatchDecision,
    /// Full stage cost in dollars, degradation included.
    pub cost: f64,
    pub breakdown: CostBreakdown,
    pub dg_committed: bool,
}

/// Solves the OPF for a fixed (already clamped) battery power.
///
/// The diesel on/off choice is settled by solving the off variant, bounding
/// the on variant from below with the off variant's multipliers, and solving
/// the on variant only when that bound does not rule it out.
pub fn solve_opf(
    cfg: &MicrogridConfig,
    state: &SystemState,
    p_b_fixed: f64,
) -> Result<OpfResult, OpfError> {
    let bat = &cfg.battery;
    if !(p_b_fixed.is_finite()
        && p_b_fixed <= bat.p_dis_max + 1e-9
        && -p_b_fixed <= bat.p_ch_max + 1e-9
        && p_b_fixed.abs() <= bat.s_max + 1e-9)
    {
        return Err(OpfError::Infeasible {
            family: LimitFamily::BatteryLimits,
            detail: format!("battery power {p_b_fixed} kW outside its limits"),
        });
    }
    let off = build_single_period_with(cfg, state, p_b_fixed, DgCommitment::Off);
    let off_sol = solve(&off.program, OPF_TOL, 100)?;
    let try_on = match off_sol.status {
        SolveStatus::Optimal => !dg_ruled_out(cfg, &off, &off_sol),
        _ => true,
    };
    let mut best: Option<(&SinglePeriodProgram, ConicSolution<f64>, bool)> = None;
    if off_sol.status == SolveStatus::Optimal {
        best = Some((&off, off_sol.clone(), false));
    }
    let on;
    if try_on {
        on = build_single_period_with(cfg, state, p_b_fixed, DgCommitment::On);
        let on_sol = solve(&on.program, OPF_TOL, 100)?;
        if on_sol.status == SolveStatus::Optimal {
            let better = best
                .as_ref()
                .map_or(true, |(_, s, _)| on_sol.objective_value < s.objective_value);
            if better {
                best = Some((&on, on_sol, true));
            }
        }
    }
    match best {
        Some((built, sol, dg_committed)) => {
            let decision = built.decision(cfg, &sol.x);
            let breakdown = cost_terms(cfg, state, &decision);
            Ok(OpfResult {
                cost: breakdown.total(),
                decision,
                breakdown,
                dg_committed,
            })
        }
        None if off_sol.status == SolveStatus::Infeasible => Err(diagnose(cfg, state, p_b_fixed)),
        None => Err(OpfError::Solver {
            status: off_sol.status,
            detail: format!(
                "residuals: primal {:.3e}, dual {:.3e}, gap {:.3e}",
                off_sol.primal_residual, off_sol.dual_residual, off_sol.duality_gap
            ),
        }),
    }
}

/// Lower bound on the improvement offered by committing the diesel unit,
/// from the Lagrangian of the off variant; true when it cannot help.
fn dg_ruled_out(
    cfg: &MicrogridConfig,
    off: &SinglePeriodProgram,
    sol: &ConicSolution<f64>,
) -> bool {
    let dg = &cfg.dg;
    let j = cfg.bus_index(dg.bus).expect("validated config");
    let y_p = sol.y[off.vars.bal_p[j]];
    let y_q = sol.y[off.vars.bal_q[j]];
    let s = cfg.bases.0;
    let dt = cfg.dt;
    let s_max = dg.s_max / s;
    let f = |p: f64| {
        let fuel = dt * (dg.alpha * s * s * p * p + dg.beta * s * p + dg.c);
        fuel + y_p * p - y_q.abs() * (s_max * s_max - p * p).max(0.0).sqrt()
    };
    // f is convex on [p_min, p_max]
    let (mut a, mut b) = (dg.p_min / s, dg.p_max / s);
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let lower = f(0.5 * (a + b)).min(f(dg.p_min / s)).min(f(dg.p_max / s));
    lower > 1e-6 * (1.0 + sol.objective_value.abs())
}

fn diagnose(cfg: &MicrogridConfig, state: &SystemState, p_b: f64) -> OpfError {
    let load_p: f64 = state.load_p.iter().sum();
    let load_q: f64 = state.load_q.iter().sum();
    let ren = &cfg.renewables;
    let g = &cfg.grid_link;
    let supply = g.p_buy_max
        + cfg.dg.p_max
        + state.pv_avail.min(ren.pv_s_max)
        + state.wt_avail.min(ren.wt_s_max)
        + p_b;
    let (family, detail) = if load_p > supply {
        (
            LimitFamily::ActiveCapacity,
            format!("active load {load_p:.3} kW exceeds supply capacity {supply:.3} kW"),
        )
    } else if p_b - load_p > g.p_sell_max {
        (
            LimitFamily::ExportCapacity,
            format!(
                "forced export {:.3} kW exceeds the sell limit",
                p_b - load_p
            ),
        )
    } else {
        let b = &cfg.battery;
        let q_cap = g.q_max
            + ren.pv_s_max
            + ren.wt_s_max
            + (b.s_max * b.s_max - p_b * p_b).max(0.0).sqrt()
            + cfg.dg.s_max;
        if load_q > q_cap {
            (
                LimitFamily::ReactiveCapacity,
                format!("reactive load {load_q:.3} kvar exceeds capability {q_cap:.3}"),
            )
        } else {
            (
                LimitFamily::VoltageOrFlow,
                "no dispatch satisfies the voltage and branch-flow limits".to_string(),
            )
        }
    };
    OpfError::Infeasible { family, detail }
}
