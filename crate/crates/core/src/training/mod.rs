//! Self-play, replay, the unrolled training loss and the paced training loop.

mod history;
mod loss;
mod replay;
mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use history::{compute_targets, self_play_episode, GameHistory, StepRecord, Target};
pub use loss::{
    loss, loss_on, loss_on_scaled, target_entropy, train_step, LossParts, Trainer,
    DYNAMICS_GRAD_SCALE,
};
pub use replay::{sample_batch, Batch, BatchItem, ReplayBuffer, SharedStorage};
pub use run::{
    load_resume, save_checkpoint, self_play_may_run, training_loop, training_loop_from,
    training_may_run, validate, write_log, Evaluation, LogRow, PaceStats, ResumeState, TrainData,
    TrainOutcome,
};

use crate::agent::{AgentError, MctsConfig, ModelSpec};
use crate::env::EnvError;
use crate::evaluate::EvalError;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    /// Nothing to sample yet; retry after self-play has stored an episode.
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("episode at row {start} aborted at step {t}: {reason}")]
    EpisodeAborted {
        start: usize,
        t: usize,
        reason: String,
    },
    #[error("worker failure: {0}")]
    WorkerPanic(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_train_steps: usize,
    pub batch_size: usize,
    /// Unroll depth K.
    pub unroll_steps: usize,
    /// Bootstrap horizon n of the value target.
    pub td_steps: usize,
    pub lr: f64,
    /// Weight c of the L2 term.
    pub c_l2: f64,
    /// Replay capacity W in episodes.
    pub buffer_capacity: usize,
    /// Target ratio of self-play environment steps to training steps.
    pub upsilon: f64,
    /// Validation period in training steps; 0 disables evaluation.
    pub eval_every: usize,
    /// Self-play threads; 0 runs self-play and training in one thread.
    pub workers: usize,
    /// Sleep of a paused worker, seconds.
    pub pause_secs: f64,
    pub soc0: f64,
    pub seed: u64,
    pub model: ModelSpec,
    /// Search used in self-play and validation; gamma is also the target discount.
    pub mcts: MctsConfig,
    /// Visit-count temperature used in self-play only.
    pub self_play_temperature: Option<f64>,
    /// Root Dirichlet noise `(alpha, fraction)` used in self-play only.
    pub self_play_dirichlet: Option<(f64, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_train_steps: 2000,
            batch_size: 64,
            unroll_steps: 5,
            td_steps: 10,
            lr: 0.005,
            c_l2: 1e-4,
            buffer_capacity: 512,
            upsilon: 10.0,
            eval_every: 20,
            workers: 0,
            pause_secs: 0.5,
            soc0: 0.5,
            seed: 0,
            model: ModelSpec::default(),
            mcts: MctsConfig::default(),
            self_play_temperature: None,
            self_play_dirichlet: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if self.td_steps == 0 {
            return bad("td_steps must be at least 1");
        }
        if !(self.upsilon.is_finite() && self.upsilon > 0.0) {
            return bad("upsilon must be positive and finite");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0 && self.c_l2.is_finite() && self.c_l2 >= 0.0) {
            return bad("lr and c_l2 must be non-negative");
        }
        if !(self.pause_secs.is_finite() && self.pause_secs >= 0.0) {
            return bad("pause_secs must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.mcts.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        self.model.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
