use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::agent::{Agent, AgentError, Observation};
use crate::env::{Env, EnvError};

/// One executed step of a self-play episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub observation: Observation<f64>,
    pub action: usize,
    /// Dollars, negative for a cost.
    pub reward: f64,
    /// Search visit distribution at this step.
    pub policy: Vec<f64>,
    pub root_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameHistory {
    /// Assigned by the replay buffer on insertion.
    pub id: u64,
    /// Trace row of the first step.
    pub start: usize,
    pub soc0: f64,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

impl GameHistory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Training targets for one unroll position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Reward of the action leading into this position (0 at k = 0 and past the end).
    pub reward: f64,
    pub value: f64,
    pub policy: Vec<f64>,
    /// False past the episode end, where the policy target is a placeholder.
    pub policy_mask: bool,
}

/// Targets for positions `t, t+1, ..., t+k_unroll` of `game`.
///
/// The value target is the `n`-step discounted reward sum plus `gamma^n`
/// times the stored root value `n` steps ahead; rewards stop at the episode
/// end and there is no bootstrap past it.
pub fn compute_targets(
    game: &GameHistory,
    t: usize,
    k_unroll: usize,
    n: usize,
    gamma: f64,
    n_actions: usize,
) -> Vec<Target> {
    let len = game.len();
    (0..=k_unroll)
        .map(|k| {
            let i = t + k;
            let reward = if k > 0 && i - 1 < len {
                game.steps[i - 1].reward
            } else {
                0.0
            };
            if i >= len {
                return Target {
                    reward,
                    value: 0.0,
                    policy: vec![1.0 / n_actions as f64; n_actions],
                    policy_mask: false,
                };
            }
            let mut value = 0.0;
            let mut disc = 1.0;
            for step in &game.steps[i..(i + n).min(len)] {
                value += disc * step.reward;
                disc *= gamma;
            }
            if i + n < len {
                value += disc * game.steps[i + n].root_value;
            }
            Target {
                reward,
                value,
                policy: game.steps[i].policy.clone(),
                policy_mask: true,
            }
        })
        .collect()
}

/// Plays one episode on a day drawn uniformly from `starts`.
///
/// An OPF failure aborts the episode with [`TrainError::EpisodeAborted`].
pub fn self_play_episode(
    agent: &Agent,
    env: &Env,
    starts: &[usize],
    soc0: f64,
    seed: u64,
) -> Result<GameHistory, TrainError> {
    if starts.is_empty() {
        return Err(TrainError::Config("no training days".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = starts[rng.gen_range(0..starts.len())];
    let mut env = env.clone();
    let mut state = env.reset(start, soc0)?;
    let mut steps = Vec::with_capacity(env.horizon());
    loop {
        let out = match agent.schedule_step(&env, &state, &mut rng) {
            Ok(o) => o,
            Err(AgentError::Env(e @ EnvError::Opf { .. })) => {
                return Err(TrainError::EpisodeAborted {
                    start,
                    t: state.t,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        };
        steps.push(StepRecord {
            observation: out.observation,
            action: out.action,
            reward: out.transition.reward,
            policy: out.search.visit_distribution,
            root_value: out.search.root_value,
        });
        state = out.transition.next;
        if out.transition.terminal {
            break;
        }
    }
    Ok(GameHistory {
        id: 0,
        start,
        soc0,
        seed,
        steps,
    })
}
