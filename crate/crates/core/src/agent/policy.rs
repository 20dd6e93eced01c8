use std::time::Instant;

use rand::Rng;

use super::mcts::{run_mcts, MctsConfig, SearchResult};
use super::model::{observe, LearnedModel, Observation};
use super::AgentError;
use crate::env::{Env, Transition};
use crate::grid::SystemState;

/// Learned model plus search settings: the online scheduler.
#[derive(Debug, Clone)]
pub struct Agent {
    pub model: LearnedModel<f64>,
    pub mcts: MctsConfig,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation<f64>,
    pub search: SearchResult,
    pub action: usize,
    pub transition: Transition,
    /// Wall time of search plus OPF, seconds.
    pub latency: f64,
}

impl Agent {
    pub fn new(model: LearnedModel<f64>, mcts: MctsConfig) -> Self {
        Agent { model, mcts }
    }

    /// Searches from the current state without acting.
    pub fn search<R: Rng>(
        &self,
        env: &Env,
        state: &SystemState,
        rng: &mut R,
    ) -> Result<(Observation<f64>, SearchResult), AgentError> {
        let levels = env.cfg().battery.action_levels.len();
        if levels != self.model.spec.n_actions {
            return Err(AgentError::Mismatch(format!(
                "model has {} actions, battery has {levels} levels",
                self.model.spec.n_actions
            )));
        }
        let obs = observe(env.cfg(), state, &env.history(state.t));
        let root = self.model.represent(&obs)?;
        let result = run_mcts(&self.model, root, &self.mcts, rng)?;
        Ok((obs, result))
    }

    /// Search, take the chosen level, clamp it and dispatch through the OPF.
    pub fn schedule_step<R: Rng>(
        &self,
        env: &Env,
        state: &SystemState,
        rng: &mut R,
    ) -> Result<StepOutcome, AgentError> {
        let t0 = Instant::now();
        let (observation, search) = self.search(env, state, rng)?;
        let action = search.chosen_action;
        let transition = env.step(state, env.cfg().battery.action_levels[action])?;
        Ok(StepOutcome {
            observation,
            search,
            action,
            transition,
            latency: t0.elapsed().as_secs_f64(),
        })
    }
}
