//! One period of the branch-flow network in per-unit, shared by the
//! single-period and multi-period builders.

use crate::conic::ConicProgram;
use crate::grid::{BranchFlow, DispatchDecision, MicrogridConfig};

const INF: f64 = f64::INFINITY;

/// Exogenous data of one period.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PeriodInput<'a> {
    pub load_p: &'a [f64],
    pub load_q: &'a [f64],
    pub pv_avail: f64,
    pub wt_avail: f64,
    pub p_buy: f64,
    pub p_sell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DgMode {
    Off,
    /// Committed: p in [p_min, p_max].
    On,
    /// Perspective relaxation with commitment level u in [0, 1].
    Relaxed,
}

#[derive(Debug, Clone)]
pub(crate) struct DgVars {
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct PeriodVars {
    pub v: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub l: Vec<usize>,
    pub bat_p: usize,
    pub bat_q: usize,
    pub pv_p: usize,
    pub pv_q: usize,
    pub wt_p: usize,
    pub wt_q: usize,
    pub buy: usize,
    pub sell: usize,
    pub grid_q: usize,
    pub dg: Option<DgVars>,
    /// Active / reactive balance rows per bus.
    pub bal_p: Vec<usize>,
    pub bal_q: Vec<usize>,
}

/// Adds the network, devices and the period's objective terms (grid energy,
/// curtailment, DG fuel) scaled to dollars. `bat_p` is an existing per-unit
/// variable; battery degradation is left to the caller.
pub(crate) fn add_period(
    prog: &mut ConicProgram<f64>,
    cfg: &MicrogridConfig,
    input: &PeriodInput<'_>,
    bat_p: usize,
    bat_p_fixed: Option<f64>,
    dg_mode: DgMode,
) -> PeriodVars {
    let n = cfg.n_buses();
    let s_base = cfg.bases.0;
    let z_base = cfg.z_base();
    let dt = cfg.dt;
    let idx = |id: usize| cfg.bus_index(id).expect("validated config");
    let root = idx(cfg.grid_link.bus);
    let (vmin, vmax) = cfg.voltage_bounds;

    let v: Vec<usize> = (0..n)
        .map(|i| {
            if i == root {
                let v0 = cfg.grid_link.v_pcc * cfg.grid_link.v_pcc;
                prog.add_var(v0, v0, 0.0)
            } else {
                prog.add_var(vmin * vmin, vmax * vmax, 0.0)
            }
        })
        .collect();
    let nb = cfg.branches.len();
    let mut p = Vec::with_capacity(nb);
    let mut q = Vec::with_capacity(nb);
    let mut l = Vec::with_capacity(nb);
    for br in &cfg.branches {
        let (r, x) = (br.r / z_base, br.x / z_base);
        let (i, j) = (idx(br.from_bus), idx(br.to_bus));
        let pk = prog.add_free_var();
        let qk = prog.add_free_var();
        let lk = prog.add_var(0.0, INF, 0.0);
        // v_j = v_i - 2 (r P + x Q) + (r^2 + x^2) l
        prog.add_eq(
            vec![
                (v[j], 1.0),
                (v[i], -1.0),
                (pk, 2.0 * r),
                (qk, 2.0 * x),
                (lk, -(r * r + x * x)),
            ],
            0.0,
        );
        // P^2 + Q^2 <= v_i l  as  ||(P, Q)||^2 <= 2 (v_i / 2) l
        let half_v = prog.add_var(0.0, INF, 0.0);
        prog.add_eq(vec![(half_v, 1.0), (v[i], -0.5)], 0.0);
        prog.add_rotated_soc(lk, half_v, vec![pk, qk]);
        p.push(pk);
        q.push(qk);
        l.push(lk);
    }

    // devices
    let bat = &cfg.battery;
    let s_b = bat.s_max / s_base;
    let bat_q = match bat_p_fixed {
        Some(pb) if (pb.abs() / s_base) >= s_b * (1.0 - 1e-9) => prog.add_var(0.0, 0.0, 0.0),
        _ => {
            let qv = prog.add_free_var();
            let head = prog.add_fixed_var(s_b);
            prog.add_soc(head, vec![bat_p, qv]);
            qv
        }
    };
    let ren = &cfg.renewables;
    let curt = cfg.p_cur * dt * s_base;
    let mut renewable = |avail: f64, s_max: f64| {
        let hi = avail.min(s_max).max(0.0) / s_base;
        let pv = prog.add_var(0.0, hi, -curt);
        let qv = prog.add_free_var();
        let head = prog.add_fixed_var(s_max / s_base);
        prog.add_soc(head, vec![pv, qv]);
        (pv, qv)
    };
    let (pv_p, pv_q) = renewable(input.pv_avail, ren.pv_s_max);
    let (wt_p, wt_q) = renewable(input.wt_avail, ren.wt_s_max);
    prog.offset += cfg.p_cur * dt * (input.pv_avail + input.wt_avail);
    let g = &cfg.grid_link;
    let buy = prog.add_var(0.0, g.p_buy_max / s_base, input.p_buy * dt * s_base);
    let sell = prog.add_var(0.0, g.p_sell_max / s_base, -input.p_sell * dt * s_base);
    let grid_q = prog.add_var(g.q_min / s_base, g.q_max / s_base, 0.0);

    let dgp = &cfg.dg;
    let dg = match dg_mode {
        DgMode::Off => None,
        DgMode::On => {
            let pd = prog.add_var(
                dgp.p_min / s_base,
                dgp.p_max / s_base,
                dgp.beta * dt * s_base,
            );
            let qd = prog.add_free_var();
            let head = prog.add_fixed_var(dgp.s_max / s_base);
            prog.add_soc(head, vec![pd, qd]);
            if dgp.alpha > 0.0 {
                // alpha S^2 p^2 <= fuel  as  w^2 <= 2 fuel (1/2),  w = sqrt(alpha) S p;
                // the rescaling keeps the cone well conditioned for large alpha S^2
                let w = scaled_power(prog, pd, dgp.alpha.sqrt() * s_base);
                let fuel = prog.add_var(0.0, INF, dt);
                let half = prog.add_fixed_var(0.5);
                prog.add_rotated_soc(fuel, half, vec![w]);
            }
            prog.offset += dgp.c * dt;
            Some(DgVars { p: pd, q: qd })
        }
        DgMode::Relaxed => {
            let u = prog.add_var(0.0, 1.0, dgp.c * dt);
            let pd = prog.add_var(0.0, INF, dgp.beta * dt * s_base);
            // p_min u <= p <= p_max u through two slacks
            let lo_slack = prog.add_var(0.0, INF, 0.0);
            prog.add_eq(
                vec![(pd, 1.0), (u, -dgp.p_min / s_base), (lo_slack, -1.0)],
                0.0,
            );
            let hi_slack = prog.add_var(0.0, INF, 0.0);
            prog.add_eq(
                vec![(pd, 1.0), (u, -dgp.p_max / s_base), (hi_slack, 1.0)],
                0.0,
            );
            let qd = prog.add_free_var();
            let head = prog.add_var(0.0, INF, 0.0);
            prog.add_eq(vec![(head, 1.0), (u, -dgp.s_max / s_base)], 0.0);
            prog.add_soc(head, vec![pd, qd]);
            if dgp.alpha > 0.0 {
                // alpha S^2 p^2 / u <= fuel  as  w^2 <= 2 fuel (u / 2)
                let w = scaled_power(prog, pd, dgp.alpha.sqrt() * s_base);
                let fuel = prog.add_var(0.0, INF, dt);
                let half_u = prog.add_var(0.0, INF, 0.0);
                prog.add_eq(vec![(half_u, 1.0), (u, -0.5)], 0.0);
                prog.add_rotated_soc(fuel, half_u, vec![w]);
            }
            Some(DgVars { p: pd, q: qd })
        }
    };

    // nodal balance: inflow - losses = outflow + load - generation
    let parent = cfg.parent_branch().expect("validated config");
    let mut bal_p = Vec::with_capacity(n);
    let mut bal_q = Vec::with_capacity(n);
    for j in 0..n {
        let mut rp: Vec<(usize, f64)> = Vec::new();
        let mut rq: Vec<(usize, f64)> = Vec::new();
        if let Some(k) = parent[j] {
            let br = &cfg.branches[k];
            rp.extend([(p[k], 1.0), (l[k], -br.r / z_base)]);
            rq.extend([(q[k], 1.0), (l[k], -br.x / z_base)]);
        }
        for (k, br) in cfg.branches.iter().enumerate() {
            if idx(br.from_bus) == j {
                rp.push((p[k], -1.0));
                rq.push((q[k], -1.0));
            }
        }
        let bus_id = cfg.buses[j];
        if j == root {
            rp.extend([(buy, 1.0), (sell, -1.0)]);
            rq.push((grid_q, 1.0));
        }
        if bus_id == bat.bus {
            rp.push((bat_p, 1.0));
            rq.push((bat_q, 1.0));
        }
        if bus_id == ren.pv_bus {
            rp.push((pv_p, 1.0));
            rq.push((pv_q, 1.0));
        }
        if bus_id == ren.wt_bus {
            rp.push((wt_p, 1.0));
            rq.push((wt_q, 1.0));
        }
        if let (Some(d), true) = (&dg, bus_id == dgp.bus) {
            rp.push((d.p, 1.0));
            rq.push((d.q, 1.0));
        }
        bal_p.push(prog.add_eq(rp, input.load_p[j] / s_base));
        bal_q.push(prog.add_eq(rq, input.load_q[j] / s_base));
    }

    PeriodVars {
        v,
        p,
        q,
        l,
        bat_p,
        bat_q,
        pv_p,
        pv_q,
        wt_p,
        wt_q,
        buy,
        sell,
        grid_q,
        dg,
        bal_p,
        bal_q,
    }
}

/// Free variable pinned to `k * var`.
fn scaled_power(prog: &mut ConicProgram<f64>, var: usize, k: f64) -> usize {
    let w = prog.add_free_var();
    prog.add_eq(vec![(w, 1.0), (var, -k)], 0.0);
    w
}

/// Converts a per-unit solution back to device powers in kW / kvar.
pub(crate) fn extract(cfg: &MicrogridConfig, vars: &PeriodVars, x: &[f64]) -> DispatchDecision {
    let s = cfg.bases.0;
    let idx = |id: usize| cfg.bus_index(id).expect("validated config");
    let flows = cfg
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| BranchFlow {
            from: idx(br.from_bus),
            p: x[vars.p[k]] * s,
            q: x[vars.q[k]] * s,
            l: x[vars.l[k]],
        })
        .collect();
    // buy and sell only enter the balance as a difference, so netting the
    // interior-point residue of both is feasible and never costs more
    let net = x[vars.buy] - x[vars.sell];
    let (dg_p, dg_q) = vars
        .dg
        .as_ref()
        .map_or((0.0, 0.0), |d| (x[d.p] * s, x[d.q] * s));
    DispatchDecision {
        dg_p,
        dg_q,
        bat_p: x[vars.bat_p] * s,
        bat_q: x[vars.bat_q] * s,
        pv_p: x[vars.pv_p] * s,
        pv_q: x[vars.pv_q] * s,
        wt_p: x[vars.wt_p] * s,
        wt_q: x[vars.wt_q] * s,
        grid_buy_p: net.max(0.0) * s,
        grid_sell_p: (-net).max(0.0) * s,
        grid_q: x[vars.grid_q] * s,
        flows,
        voltages: vars.v.iter().map(|&i| x[i]).collect(),
        s_base: s,
    }
}
