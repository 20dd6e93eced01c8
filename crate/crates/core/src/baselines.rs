//! Comparison policies: myopic, MPC on noisy forecasts and the
//! perfect-information dynamic program.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{clamp_battery, soc_transition, Env};
use crate::evaluate::{EvalError, Policy};
use crate::grid::{MicrogridConfig, SystemState};
use crate::opf::{build_multi_period, solve_multi_period, solve_opf, OpfError, OpfResult};

/// Default SoC grid step of the gridded dynamic program.
pub const DEFAULT_SOC_RESOLUTION: f64 = 0.005;

/// Costs closer than this are treated as equal when breaking ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MyopicChoice {
    /// Requested level, kW.
    pub level: f64,
    /// Executed power after the clamp, kW.
    pub p_b: f64,
    pub result: OpfResult,
}

/// Cheapest single-step level; ties go to the level closest to 0.
pub fn myopic_policy(cfg: &MicrogridConfig, state: &SystemState) -> Result<MyopicChoice, OpfError> {
    let mut best: Option<MyopicChoice> = None;
    let mut last_err = None;
    let mut cache: Vec<(f64, Result<OpfResult, OpfError>)> = Vec::new();
    for &level in &cfg.battery.action_levels {
        let p_b = clamp_battery(&cfg.battery, state.soc, level, cfg.dt);
        let r = match cache.iter().find(|(p, _)| *p == p_b) {
            Some((_, r)) => r.clone(),
            None => {
                let r = solve_opf(cfg, state, p_b);
                cache.push((p_b, r.clone()));
                r
            }
        };
        match r {
            Ok(result) => {
                let better = best.as_ref().map_or(true, |b| {
                    result.cost < b.result.cost - TIE_TOL
                        || (result.cost <= b.result.cost + TIE_TOL && level.abs() < b.level.abs())
                });
                if better {
                    best = Some(MyopicChoice { level, p_b, result });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| OpfError::Input("no battery levels".into())))
}

#[derive(Debug, Clone, Default)]
pub struct MyopicPolicy;

impl Policy for MyopicPolicy {
    fn name(&self) -> String {
        "myopic".into()
    }

    fn act(&mut self, env: &Env, state: &SystemState) -> Result<f64, EvalError> {
        Ok(myopic_policy(env.cfg(), state)?.level)
    }
}

/// Relative standard deviations of the multiplicative forecast errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub pv: f64,
    pub wt: f64,
    pub load: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            pv: 0.10,
            wt: 0.10,
            load: 0.03,
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        NoiseSpec {
            pv: 0.0,
            wt: 0.0,
            load: 0.0,
        }
    }
}

/// Perturbs forecasts in place; the current step is known exactly.
pub fn perturb_forecasts<R: rand::Rng>(
    forecasts: &mut [SystemState],
    noise: &NoiseSpec,
    rng: &mut R,
) {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let factor = |sigma: f64, rng: &mut R| {
        if sigma > 0.0 {
            (1.0 + sigma * n.sample(rng)).max(0.0)
        } else {
            1.0
        }
    };
    for f in forecasts.iter_mut().skip(1) {
        f.pv_avail *= factor(noise.pv, rng);
        f.wt_avail *= factor(noise.wt, rng);
        let k = factor(noise.load, rng);
        f.load_p.iter_mut().for_each(|v| *v *= k);
        f.load_q.iter_mut().for_each(|v| *v *= k);
    }
}

/// The level nearest to `p` kW; ties go to the level closer to 0.
pub fn nearest_level(levels: &[f64], p: f64) -> f64 {
    let mut best = levels[0];
    for &l in levels {
        let (d, db) = ((l - p).abs(), (best - p).abs());
        if d < db - TIE_TOL || (d <= db + TIE_TOL && l.abs() < best.abs()) {
            best = l;
        }
    }
    best
}

/// One receding-horizon decision: plan over `h` steps (truncated at the
/// episode end) on perturbed forecasts, return the first move as a level.
pub fn mpc_policy<R: rand::Rng>(
    env: &Env,
    state: &SystemState,
    h: usize,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<f64, EvalError> {
    let cfg = env.cfg();
    let mut forecasts = env.forecast(state.t, state.soc, h)?;
    forecasts[0] = state.clone();
    perturb_forecasts(&mut forecasts, noise, rng);
    let n = forecasts.len();
    let built = build_multi_period(cfg, state.soc, &forecasts, n)?;
    let plan = solve_multi_period(cfg, &built)?;
    Ok(nearest_level(
        &cfg.battery.action_levels,
        plan.battery_power(0),
    ))
}

#[derive(Debug, Clone)]
pub struct MpcPolicy {
    pub horizon: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl MpcPolicy {
    pub fn new(horizon: usize, noise: NoiseSpec, seed: u64) -> Self {
        MpcPolicy {
            horizon,
            noise,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for MpcPolicy {
    fn name(&self) -> String {
        format!("mpc{}", self.horizon)
    }

    fn begin_day(&mut self, env: &Env, _soc0: f64) -> Result<(), EvalError> {
        self.rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (env.start() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        Ok(())
    }

    fn act(&mut self, env: &Env, state: &SystemState) -> Result<f64, EvalError> {
        mpc_policy(env, state, self.horizon, &self.noise, &mut self.rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpPlan {
    /// Cost the DP believes it achieves (equal to `realized_cost` without
    /// grid snapping).
    pub planned_cost: f64,
    /// Cost of replaying `schedule` through the environment.
    pub realized_cost: f64,
    /// Requested level per step, kW.
    pub schedule: Vec<f64>,
    /// Distinct SoC states examined over all steps.
    pub states: usize,
    pub opf_solves: usize,
}

/// Stage costs memoized by (step, executed power): the OPF does not see the
/// SoC except through the clamp.
struct StageCosts<'a> {
    env: &'a Env,
    memo: HashMap<(usize, u64), Option<f64>>,
    solves: usize,
}

impl StageCosts<'_> {
    fn get(&mut self, t: usize, p_b: f64) -> Result<Option<f64>, EvalError> {
        let key = (t, p_b.to_bits());
        if let Some(c) = self.memo.get(&key) {
            return Ok(*c);
        }
        let state = self.env.state_at(t, 0.5)?;
        self.solves += 1;
        let c = match solve_opf(self.env.cfg(), &state, p_b) {
            Ok(r) => Some(r.cost),
            Err(OpfError::Infeasible { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        self.memo.insert(key, c);
        Ok(c)
    }
}

struct Edge {
    level: f64,
    cost: f64,
    next: usize,
}

/// Backward induction over the SoC states reachable from `soc0` with the
/// discrete levels. With `resolution = None` states are kept exactly (merged
/// only below 1e-12), which makes the plan the exact optimum over the
/// shared action set. With `Some(step)` successors snap to a grid of that
/// step, and the realized cost of the plan is re-simulated without snapping.
pub fn perfect_info_dp(
    env: &mut Env,
    start: usize,
    soc0: f64,
    resolution: Option<f64>,
) -> Result<DpPlan, EvalError> {
    env.reset(start, soc0)?;
    let cfg = env.cfg().clone();
    let bat = &cfg.battery;
    let horizon = cfg.horizon_t;
    let snap = |s: f64| -> (i64, f64) {
        match resolution {
            Some(step) => {
                let k = ((s - bat.soc_min) / step).round();
                (
                    k as i64,
                    (bat.soc_min + k * step).clamp(bat.soc_min, bat.soc_max),
                )
            }
            None => ((s * 1e12).round() as i64, s),
        }
    };
    if let Some(step) = resolution {
        let cells = (bat.soc_max - bat.soc_min) / step;
        if !(step > 0.0 && cells <= 1e4) {
            return Err(EvalError::Input(format!(
                "SoC resolution {step} gives more than 1e4 cells"
            )));
        }
    }
    let mut levels: Vec<f64> = bat.action_levels.clone();
    // lower |level| first so equal-cost edges prefer small moves
    levels.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut stage = StageCosts {
        env,
        memo: HashMap::new(),
        solves: 0,
    };
    let mut layers: Vec<Vec<f64>> = vec![vec![snap(soc0).1]];
    let mut edges: Vec<Vec<Vec<Edge>>> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut index: HashMap<i64, usize> = HashMap::new();
        let mut next_layer = Vec::new();
        let mut layer_edges = Vec::with_capacity(layers[t].len());
        for &soc in &layers[t] {
            let mut out: Vec<Edge> = Vec::new();
            let mut seen: Vec<f64> = Vec::new();
            for &level in &levels {
                let p_b = clamp_battery(bat, soc, level, cfg.dt);
                if seen.contains(&p_b) {
                    continue;
                }
                seen.push(p_b);
                let Some(cost) = stage.get(t, p_b)? else {
                    continue;
                };
                let nxt = soc_transition(bat, soc, p_b, cfg.dt).clamp(bat.soc_min, bat.soc_max);
                let (key, value) = snap(nxt);
                let next = *index.entry(key).or_insert_with(|| {
                    next_layer.push(value);
                    next_layer.len() - 1
                });
                out.push(Edge { level, cost, next });
            }
            layer_edges.push(out);
        }
        edges.push(layer_edges);
        layers.push(next_layer);
    }

    let mut value = vec![0.0; layers[horizon].len()];
    let mut choice: Vec<Vec<Option<usize>>> = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let mut v = vec![f64::INFINITY; layers[t].len()];
        let mut c = vec![None; layers[t].len()];
        for (i, out) in edges[t].iter().enumerate() {
            for (k, e) in out.iter().enumerate() {
                let total = e.cost + value[e.next];
                if total < v[i] - TIE_TOL {
                    v[i] = total;
                    c[i] = Some(k);
                }
            }
        }
        value = v;
        choice[t] = c;
    }
    let planned_cost = value[0];
    if !planned_cost.is_finite() {
        return Err(EvalError::Input(format!(
            "no feasible schedule for the day starting at row {start}"
        )));
    }
    let mut schedule = Vec::with_capacity(horizon);
    let mut i = 0;
    for t in 0..horizon {
        let k = choice[t][i].expect("finite value has a choice");
        let e = &edges[t][i][k];
        schedule.push(e.level);
        i = e.next;
    }
    let opf_solves = stage.solves;
    let states = layers.iter().map(|l| l.len()).sum();

    let mut state = env.reset(start, soc0)?;
    let mut realized_cost = 0.0;
    for &level in &schedule {
        let tr = env.step(&state, level)?;
        realized_cost -= tr.reward;
        state = tr.next;
    }
    Ok(DpPlan {
        planned_cost,
        realized_cost,
        schedule,
        states,
        opf_solves,
    })
}

/// Plays the perfect-information plan computed at the start of each day.
#[derive(Debug, Clone)]
pub struct DpPolicy {
    pub resolution: Option<f64>,
    schedule: Vec<f64>,
}

impl DpPolicy {
    pub fn new(resolution: Option<f64>) -> Self {
        DpPolicy {
            resolution,
            schedule: Vec::new(),
        }
    }
}

impl Policy for DpPolicy {
    fn name(&self) -> String {
        "dp".into()
    }

    fn begin_day(&mut self, env: &Env, soc0: f64) -> Result<(), EvalError> {
        let mut scratch = env.clone();
        self.schedule = perfect_info_dp(&mut scratch, env.start(), soc0, self.resolution)?.schedule;
        Ok(())
    }

    fn act(&mut self, _env: &Env, state: &SystemState) -> Result<f64, EvalError> {
        self.schedule
            .get(state.t)
            .copied()
            .ok_or_else(|| EvalError::Input(format!("no planned action for step {}", state.t)))
    }
}
