//! Running a policy over whole days through the shared environment path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agent::{Agent, AgentError};
use crate::env::{Env, EnvError};
use crate::grid::SystemState;
use crate::opf::{max_relaxation_gap, OpfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Input(String),
}

/// A battery scheduling rule: picks the requested battery power (kW) for
/// the current state. Execution (clamp + OPF) is done by [`run_day`].
pub trait Policy {
    fn name(&self) -> String;

    /// Called once before the first step of an episode.
    fn begin_day(&mut self, _env: &Env, _soc0: f64) -> Result<(), EvalError> {
        Ok(())
    }

    fn act(&mut self, env: &Env, state: &SystemState) -> Result<f64, EvalError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub t: usize,
    pub hour: f64,
    pub soc: f64,
    pub requested_kw: f64,
    pub p_b: f64,
    pub cost: f64,
    pub grid_buy: f64,
    pub grid_sell: f64,
    pub dg_p: f64,
    pub pv_used: f64,
    pub wt_used: f64,
    pub dg_committed: bool,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayReport {
    pub start: usize,
    pub cost: f64,
    pub discounted_return: f64,
    pub steps: Vec<StepReport>,
}

/// Plays one episode from trace row `start`.
pub fn run_day(
    env: &mut Env,
    start: usize,
    soc0: f64,
    policy: &mut dyn Policy,
    gamma: f64,
) -> Result<DayReport, EvalError> {
    let mut state = env.reset(start, soc0)?;
    policy.begin_day(env, soc0)?;
    let mut steps = Vec::with_capacity(env.horizon());
    let mut cost = 0.0;
    let mut ret = 0.0;
    let mut disc = 1.0;
    loop {
        let requested = policy.act(env, &state)?;
        let tr = env.step(&state, requested)?;
        let d = &tr.decision;
        steps.push(StepReport {
            t: state.t,
            hour: state.hour,
            soc: state.soc,
            requested_kw: requested,
            p_b: tr.p_b,
            cost: -tr.reward,
            grid_buy: d.grid_buy_p,
            grid_sell: d.grid_sell_p,
            dg_p: d.dg_p,
            pv_used: d.pv_p,
            wt_used: d.wt_p,
            dg_committed: tr.dg_committed,
            max_gap: max_relaxation_gap(d)?,
        });
        cost -= tr.reward;
        ret += disc * tr.reward;
        disc *= gamma;
        state = tr.next;
        if tr.terminal {
            break;
        }
    }
    Ok(DayReport {
        start,
        cost,
        discounted_return: ret,
        steps,
    })
}

/// Runs `policy` on every start in `starts`.
pub fn run_days(
    env: &mut Env,
    starts: &[usize],
    soc0: f64,
    policy: &mut dyn Policy,
    gamma: f64,
) -> Result<Vec<DayReport>, EvalError> {
    starts
        .iter()
        .map(|&s| run_day(env, s, soc0, policy, gamma))
        .collect()
}

/// The learned scheduler as a [`Policy`]; the search RNG is reseeded per day
/// so reports do not depend on day order.
#[derive(Debug, Clone)]
pub struct AgentPolicy {
    pub agent: Agent,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl AgentPolicy {
    pub fn new(agent: Agent, seed: u64) -> Self {
        AgentPolicy {
            agent,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for AgentPolicy {
    fn name(&self) -> String {
        "agent".into()
    }

    fn begin_day(&mut self, env: &Env, _soc0: f64) -> Result<(), EvalError> {
        self.rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (env.start() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        Ok(())
    }

    fn act(&mut self, env: &Env, state: &SystemState) -> Result<f64, EvalError> {
        let (_, r) = self.agent.search(env, state, &mut self.rng)?;
        Ok(env.cfg().battery.action_levels[r.chosen_action])
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
