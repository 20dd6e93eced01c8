//! Learned model, tree search and the online scheduling policy.

mod mcts;
mod model;
mod policy;

use thiserror::Error;

pub use mcts::{
    puct_score, puct_select, run_mcts, select_with, EdgeStats, MctsConfig, MinMaxStats, Node,
    SearchModel, SearchResult, SearchTree, UnvisitedValue,
};
pub use model::{observe, LearnedModel, ModelSpec, Observation, POWER_SCALE, STATE_FEATURES};
pub use policy::{Agent, StepOutcome};

use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    Mismatch(String),
}
